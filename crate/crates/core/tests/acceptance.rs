//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Built with `harness = false` so the lines
//! are visible under a plain `cargo test`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use zspo::distinguish::{sign_threshold, two_step_example, two_step_preference_probability};
use zspo::gridworld::make_gridworld;
use zspo::harness::{execute, final_row, replay, run_experiment, ExperimentConfig, RunRecord};
use zspo::mdp::{exact_value_gradient, exact_value_table, monte_carlo_value, exact_value, PolicyParams};
use zspo::preference::{LinkFunction, Panel};
use zspo::rng;
use zspo::zo::{self, ConcaveQuadratic, FnObjective, Method, Objective, ScheduleConfig, Sign};
use zspo::zspo::majority_sign;

const THRESHOLD_STEP: f64 = 0.375;
const THRESHOLD_STEP_TOL: f64 = 1e-6;
const THRESHOLD_LOGISTIC: f64 = 0.2768;
const THRESHOLD_LOGISTIC_TOL: f64 = 1e-3;

const MACHINE_TOL: f64 = 1e-14;
const PROBABILITY_TOL: f64 = 1e-12;

const NORM_SQ_BAND: (f64, f64) = (0.98, 1.02);
const ABS_PROJECTION_BAND: (f64, f64) = (0.99, 1.01);

const CI_MARGIN_HALF_WIDTHS: f64 = 3.0;

const QUAD_DIM: usize = 20;
const QUAD_T: usize = 5000;
const QUAD_SEEDS: u64 = 50;
const QUAD_GRAD_RATIO: f64 = 0.05;

const VOTE_PAIRS: usize = 1001;
const VOTE_P: f64 = 0.6;
const VOTE_TRIALS: usize = 10_000;
const VOTE_MAX_WRONG: f64 = 1e-3;

const MC_SAMPLES: usize = 100_000;
const MC_SE_MARGIN: f64 = 3.0;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-5;
const ORACLE_POINTS: u64 = 20;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_thresholds() -> Outcome {
    let step = sign_threshold(&LinkFunction::step()).map_err(|e| e.to_string())?;
    let logistic = sign_threshold(&LinkFunction::logistic(1.0)).map_err(|e| e.to_string())?;
    check(
        (step - THRESHOLD_STEP).abs() <= THRESHOLD_STEP_TOL && (logistic - THRESHOLD_LOGISTIC).abs() <= THRESHOLD_LOGISTIC_TOL,
        format!("step {step:.9}, logistic {logistic:.6}"),
    )
}

fn c2_two_step_values() -> Outcome {
    let mut worst_value = 0.0_f64;
    let mut worst_prob = 0.0_f64;
    for k in 0..=10 {
        let eps = k as f64 / 10.0;
        let (mdp, pi0, pi1) = two_step_example(eps).map_err(|e| e.to_string())?;
        let v0 = exact_value_table(&mdp, &pi0).map_err(|e| e.to_string())?;
        let v1 = exact_value_table(&mdp, &pi1).map_err(|e| e.to_string())?;
        worst_value = worst_value.max((v0 - 1.0).abs()).max((v1 - (1.0 + eps)).abs());
        let p = two_step_preference_probability(&LinkFunction::step(), eps).map_err(|e| e.to_string())?;
        worst_prob = worst_prob.max((p - (0.8 * eps + 0.2)).abs());
    }
    check(
        worst_value <= MACHINE_TOL && worst_prob <= PROBABILITY_TOL,
        format!("max value error {worst_value:.1e}, max probability error {worst_prob:.1e}"),
    )
}

fn c3_gaussian_constants() -> Outcome {
    let d = 100;
    let mut r = rng::stream(rng::derive_label(7, "norm-sq"));
    let n = 100_000;
    let norm_sq = (0..n).map(|_| zo::gaussian_vector(d, &mut r).iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n as f64;
    let norm_ratio = norm_sq / d as f64;

    let mut r = rng::stream(rng::derive_label(7, "abs-projection"));
    let a: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let n = 1_000_000;
    let mean_abs = (0..n)
        .map(|_| zo::gaussian_vector(d, &mut r).iter().zip(&a).map(|(v, a)| v * a).sum::<f64>().abs())
        .sum::<f64>()
        / n as f64;
    let proj_ratio = mean_abs / ((2.0 / std::f64::consts::PI).sqrt() * zo::norm(&a));
    let inside = |x: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&x);
    check(
        inside(norm_ratio, NORM_SQ_BAND) && inside(proj_ratio, ABS_PROJECTION_BAND),
        format!("E|v|^2/d = {norm_ratio:.4}, E|<v,a>|/(sqrt(2/pi)|a|) = {proj_ratio:.4}"),
    )
}

fn desk_run(file: &str) -> Result<RunRecord, String> {
    let cfg = ExperimentConfig::load(&configs_dir().join(file)).map_err(|e| e.to_string())?;
    execute(&cfg).map_err(|e| e.to_string())
}

fn last(record: &RunRecord, algo: &str) -> Result<(f64, f64), String> {
    final_row(record, algo).map(|r| (r.mean, r.half_width)).ok_or_else(|| format!("no rows for {algo}"))
}

fn overlap((m1, h1): (f64, f64), (m2, h2): (f64, f64)) -> bool {
    (m1 - m2).abs() <= h1 + h2
}

fn c4_desk_bradley_terry(record: &RunRecord) -> Outcome {
    let v0 = record.initial_value;
    let zspo = last(record, "zspo")?;
    let zpg = last(record, "zpg")?;
    let improves = |(m, h): (f64, f64)| m - v0 > CI_MARGIN_HALF_WIDTHS * h;
    check(
        overlap(zspo, zpg) && improves(zspo) && improves(zpg),
        format!("initial {v0:.3}, zspo {:.3} +- {:.3}, zpg {:.3} +- {:.3}", zspo.0, zspo.1, zpg.0, zpg.1),
    )
}

fn c5_desk_linear(record: &RunRecord, bt: &RunRecord) -> Outcome {
    let zspo = last(record, "zspo")?;
    let dpo = last(record, "dpo")?;
    let ppo = last(record, "rm-ppo")?;
    let zspo_bt = last(bt, "zspo")?;
    let beats = |other: (f64, f64)| zspo.0 > other.0 && !overlap(zspo, other);
    let robust = (zspo.0 - zspo_bt.0).abs() <= zspo.1;
    check(
        beats(dpo) && beats(ppo) && robust,
        format!(
            "zspo {:.3} +- {:.3} (BT setting {:.3}), dpo {:.3} +- {:.3}, rm-ppo {:.3} +- {:.3}",
            zspo.0, zspo.1, zspo_bt.0, dpo.0, dpo.1, ppo.0, ppo.1
        ),
    )
}

fn mean_final_grad_norm(objective: &ConcaveQuadratic, iterations: usize, theta0: &[f64]) -> Result<f64, String> {
    let schedule = ScheduleConfig { lr_scale: 1.0, mu: 0.01, horizon: 1.0, iterations };
    let mut total = 0.0;
    for seed in 0..QUAD_SEEDS {
        let trace = zo::run_ascent(objective, &schedule, Method::ZspoSign, theta0, seed).map_err(|e| e.to_string())?;
        let end = trace.last().and_then(|p| p.grad_norm).ok_or("empty trace")?;
        total += end;
    }
    Ok(total / QUAD_SEEDS as f64)
}

fn c6_quadratic_convergence() -> Outcome {
    let objective = ConcaveQuadratic::isotropic(vec![1.0; QUAD_DIM]);
    let theta0 = vec![0.0; QUAD_DIM];
    let initial = zo::norm(&objective.gradient(&theta0).expect("quadratic has a gradient"));
    let at_t = mean_final_grad_norm(&objective, QUAD_T, &theta0)?;
    let at_2t = mean_final_grad_norm(&objective, 2 * QUAD_T, &theta0)?;
    check(
        at_t <= QUAD_GRAD_RATIO * initial && at_2t < at_t,
        format!("initial {initial:.3}, T {at_t:.4}, 2T {at_2t:.4}"),
    )
}

fn c7_majority_concentration() -> Outcome {
    // A single panelist whose preference probability at this gap is 0.6.
    let link = LinkFunction::linear(1.0);
    let gap = VOTE_P - 0.5;
    let panel = Panel::new(link, 1).map_err(|e| e.to_string())?;
    let p = link.eval(gap);
    if (p - VOTE_P).abs() > 1e-12 {
        return Err(format!("panelist probability {p}"));
    }
    let mut wrong = 0usize;
    for trial in 0..VOTE_TRIALS {
        let base = rng::derive_label(trial as u64, "majority");
        let tally: u64 = (0..VOTE_PAIRS)
            .map(|n| panel.majority(gap, &mut rng::stream(rng::pair_key(base, n))) as u64)
            .sum();
        if majority_sign(tally, VOTE_PAIRS) != Sign::Positive {
            wrong += 1;
        }
    }
    let freq = wrong as f64 / VOTE_TRIALS as f64;
    check(freq <= VOTE_MAX_WRONG, format!("wrong-sign frequency {freq:.1e} over {VOTE_TRIALS} trials"))
}

const REPLAY_CONFIG: &str = r#"
name = "replay-check"
master_seed = 11
repetitions = 2
cadence = 3

[environment]
kind = "gridworld"
seed = 4

[panel]
kind = "logistic"
gamma = 1.0
panelists = 25

[[algorithms]]
algo = "zspo"
iterations = 12
batches = 15
batch_size = 2

[[algorithms]]
algo = "zpg"
iterations = 12
batches = 15

[[algorithms]]
algo = "rm-ppo"
iterations = 6
batches = 15
rm_pairs = 2000

[[algorithms]]
algo = "dpo"
iterations = 6
batches = 15

[[algorithms]]
algo = "online-dpo"
iterations = 6
batches = 15
"#;

fn c8_replay() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::from_toml(REPLAY_CONFIG).map_err(|e| e.to_string())?;
    cfg.output_dir = tmp.path().join("original");
    run_experiment(&cfg).map_err(|e| e.to_string())?;
    let outcome = replay(&cfg.output_dir.join("manifest.toml"), &tmp.path().join("replayed")).map_err(|e| e.to_string())?;
    let aggregate_same = std::fs::read(cfg.output_dir.join("aggregate.csv")).map_err(|e| e.to_string())?
        == std::fs::read(tmp.path().join("replayed/aggregate.csv")).map_err(|e| e.to_string())?;
    check(
        outcome.identical && aggregate_same,
        format!("raw identical {}, aggregate identical {aggregate_same}", outcome.identical),
    )
}

fn c9_oracle_coherence() -> Outcome {
    let mdp = make_gridworld(0).map_err(|e| e.to_string())?;
    let d = mdp.dim();
    let random_params = |seed: u64| {
        let mut r = rng::stream(rng::derive_label(seed, "policy"));
        PolicyParams::for_mdp(&mdp, zo::gaussian_vector(d, &mut r))
    };
    let mut worst_z = 0.0_f64;
    let mut worst_rel = 0.0_f64;
    for k in 0..ORACLE_POINTS {
        let params = random_params(k).map_err(|e| e.to_string())?;
        let exact = exact_value(&mdp, &params).map_err(|e| e.to_string())?;
        let mut r = rng::stream(rng::derive_label(k, "monte-carlo"));
        let (mc, se) = monte_carlo_value(&mdp, &params, MC_SAMPLES, &mut r).map_err(|e| e.to_string())?;
        worst_z = worst_z.max((mc - exact).abs() / se);

        let params = random_params(1000 + k).map_err(|e| e.to_string())?;
        let grad = exact_value_gradient(&mdp, &params).map_err(|e| e.to_string())?;
        let objective = FnObjective {
            dim: d,
            f: |th: &[f64]| exact_value(&mdp, &PolicyParams::for_mdp(&mdp, th.to_vec()).expect("dimension")).expect("value"),
        };
        let fd = zo::finite_difference_gradient(&objective, &params.theta, FD_STEP).map_err(|e| e.to_string())?;
        let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst_rel = worst_rel.max(zo::norm(&diff) / zo::norm(&grad));
    }
    check(
        worst_z <= MC_SE_MARGIN && worst_rel <= FD_REL_TOL,
        format!("max |mc - exact| / se = {worst_z:.2}, max gradient relative error {worst_rel:.1e}"),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let s = Instant::now();
    report(1, "two-step sign thresholds", s, c1_thresholds());
    let s = Instant::now();
    report(2, "two-step closed-form values", s, c2_two_step_values());
    let s = Instant::now();
    report(3, "gaussian moment constants", s, c3_gaussian_constants());

    let s = Instant::now();
    let bt = desk_run("desk_fig1a.toml");
    report(4, "desk comparison, logistic truth", s, bt.as_ref().map_err(Clone::clone).and_then(c4_desk_bradley_terry));
    let s = Instant::now();
    let linear = desk_run("desk_fig1b.toml");
    let c5 = match (&linear, &bt) {
        (Ok(l), Ok(b)) => c5_desk_linear(l, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(5, "desk comparison, linear truth", s, c5);

    let s = Instant::now();
    report(6, "sign ascent on a concave quadratic", s, c6_quadratic_convergence());
    let s = Instant::now();
    report(7, "majority-vote concentration", s, c7_majority_concentration());
    let s = Instant::now();
    report(8, "manifest replay", s, c8_replay());
    let s = Instant::now();
    report(9, "value and gradient oracles", s, c9_oracle_coherence());

    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
