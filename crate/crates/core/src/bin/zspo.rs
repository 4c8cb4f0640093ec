use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_distr::{Distribution, Normal};

use zspo::distinguish::{definition_check, two_step_example, DistinguishabilityReport};
use zspo::gridworld::make_gridworld;
use zspo::harness::{
    self, emit_curves, gridworld_experiment, read_aggregate_csv, run_experiment, AlgorithmSpec, CurveFormat,
    Environment, ExperimentConfig, ZspoSpec,
};
use zspo::mdp::PolicyParams;
use zspo::preference::{LinkFunction, LinkKind};
use zspo::rng;
use zspo::zo::{ConcaveQuadratic, Method, Objective, ScheduleConfig, SmoothedPiecewise};
use zspo::{Error, Result};

#[derive(Parser)]
#[command(name = "zspo", version, about = "Policy optimization from panel preferences with unknown link functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm (or every algorithm of a config file) and write CSVs.
    Train(TrainArgs),
    /// Run a multi-algorithm config, or overlay existing aggregate CSVs.
    Compare(CompareArgs),
    /// Check panel distinguishability of a policy pair.
    Distinguish(DistinguishArgs),
    /// Benchmark zeroth-order ascent methods on test objectives.
    ZoBench(ZoBenchArgs),
    /// Re-run a manifest and compare its raw CSV byte-for-byte.
    Replay {
        manifest: PathBuf,
        /// Output directory of the replay (default: `<manifest dir>/replay`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Zspo,
    Zpg,
    RmPpo,
    Dpo,
    OnlineDpo,
}

impl Algo {
    fn tag(self) -> &'static str {
        match self {
            Algo::Zspo => "zspo",
            Algo::Zpg => "zpg",
            Algo::RmPpo => "rm-ppo",
            Algo::Dpo => "dpo",
            Algo::OnlineDpo => "online-dpo",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Gridworld,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML). Overrides every other flag except --out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "zspo")]
    algo: Algo,
    #[arg(long, value_enum, default_value = "gridworld")]
    env: EnvKind,
    /// Seed of the generated GridWorld.
    #[arg(long, default_value_t = 0)]
    env_seed: u64,
    /// Tabular MDP file (JSON) instead of a generated GridWorld.
    #[arg(long)]
    env_file: Option<PathBuf>,
    /// True panel link: logistic, linear, step or probit.
    #[arg(long, default_value = "logistic")]
    link: LinkKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    panel_size: usize,
    #[arg(long = "T", default_value_t = 1000)]
    iterations: usize,
    #[arg(long = "N", default_value_t = 1000)]
    batches: usize,
    #[arg(long = "D", default_value_t = 1)]
    batch_size: usize,
    /// Perturbation radius (default: corollary choice).
    #[arg(long)]
    mu: Option<f64>,
    /// Learning-rate scale `c` in `c * sqrt(H / (d t))` (ZSPO and ZPG).
    #[arg(long)]
    lr_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    cadence: usize,
    /// Output directory (also settable via ZSPO_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Experiment config to run; its aggregate curves are overlaid.
    #[arg(long, conflicts_with = "inputs")]
    config: Option<PathBuf>,
    /// Existing aggregate CSVs to overlay.
    #[arg(long, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output SVG (default: `<output dir>/compare.svg`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistinguishArgs {
    #[arg(long, default_value = "logistic")]
    link: LinkKind,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "D", default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Two-step example with this `eps` (the default policy pair).
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Use a random softmax policy pair on the GridWorld with this seed instead.
    #[arg(long)]
    gridworld: Option<u64>,
    /// Standard deviation of the random logits on GridWorld.
    #[arg(long, default_value_t = 1.0)]
    logit_scale: f64,
    /// Rewards rescaled into [0, 1] on GridWorld.
    #[arg(long)]
    normalized: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep file; a row is appended per call.
    #[arg(long, default_value = "distinguish.csv")]
    csv: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMethod {
    ZoSgd,
    ZoSignSgd,
    ZspoSign,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchObjective {
    Quadratic,
    Piecewise,
}

#[derive(Args)]
struct ZoBenchArgs {
    #[arg(long, value_enum, default_value = "zspo-sign")]
    method: BenchMethod,
    #[arg(long, value_enum, default_value = "quadratic")]
    objective: BenchObjective,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long = "T", default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1.0)]
    lr_scale: f64,
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    /// Horizon term `H` of the step schedule.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Directions averaged by zo-sign-sgd.
    #[arg(long, default_value_t = 10)]
    q: usize,
    /// Keep every `stride`-th iterate.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "zo_bench.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Compare(args) => compare(args),
        Command::Distinguish(args) => distinguish(args),
        Command::ZoBench(args) => zo_bench(args),
        Command::Replay { manifest, out } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("replay"));
            let outcome = harness::replay(&manifest, &out)?;
            println!(
                "replay {}: {} vs {}",
                if outcome.identical { "identical" } else { "DIFFERS" },
                outcome.original.display(),
                outcome.replayed.display()
            );
            Ok(if outcome.identical { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn train_config(args: &TrainArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        return ExperimentConfig::load(path);
    }
    let mut spec = AlgorithmSpec::from_tag(args.algo.tag(), args.iterations, args.batches)?;
    match &mut spec {
        AlgorithmSpec::Zspo(z) => {
            *z = ZspoSpec { batch_size: args.batch_size, mu: args.mu, ..z.clone() };
            if let Some(c) = args.lr_scale {
                z.lr_scale = c;
            }
        }
        AlgorithmSpec::Zpg(b) => {
            if let Some(mu) = args.mu {
                b.mu = mu;
            }
            if let Some(c) = args.lr_scale {
                b.zpg_lr_scale = c;
            }
        }
        _ => {}
    }
    let link = LinkFunction::new(args.link, args.gamma)?;
    let mut cfg = gridworld_experiment(args.env_seed, link, args.panel_size, spec)?;
    if let Some(path) = &args.env_file {
        cfg.environment = Environment::File { path: path.clone() };
    }
    let EnvKind::Gridworld = args.env;
    cfg.master_seed = args.seed;
    cfg.repetitions = args.reps;
    cfg.cadence = args.cadence;
    cfg.output_dir = PathBuf::from("out").join(args.algo.tag());
    Ok(cfg)
}

fn finish_config(mut cfg: ExperimentConfig, out: &Option<PathBuf>) -> Result<ExperimentConfig> {
    cfg.apply_env_overrides()?;
    if let Some(out) = out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run_and_report(cfg: &ExperimentConfig) -> Result<harness::RunRecord> {
    let record = run_experiment(cfg)?;
    emit_curves(&record, CurveFormat::Csv, &cfg.output_dir)?;
    emit_curves(&record, CurveFormat::Svg, &cfg.output_dir)?;
    println!("initial value {:.6}", record.initial_value);
    for spec in &cfg.algorithms {
        if let Some(row) = harness::final_row(&record, spec.tag()) {
            println!(
                "{:<10} t={:<6} mean {:.6}  95% CI [{:.6}, {:.6}]  n={}",
                row.algo,
                row.t,
                row.mean,
                row.ci_low(),
                row.ci_high(),
                row.n
            );
        }
    }
    for c in record.cells.iter().filter(|c| c.status != "ok") {
        eprintln!("warning: {} rep {} {}: {}", c.algo, c.rep, c.status, c.message.as_deref().unwrap_or(""));
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(record)
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = finish_config(train_config(&args)?, &args.out)?;
    run_and_report(&cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn compare(args: CompareArgs) -> Result<ExitCode> {
    let (rows, default_out) = match &args.config {
        Some(path) => {
            let cfg = finish_config(ExperimentConfig::load(path)?, &None)?;
            let record = run_and_report(&cfg)?;
            (record.aggregate, cfg.output_dir.join("compare.svg"))
        }
        None => {
            if args.inputs.is_empty() {
                return Err(Error::InvalidArgument("compare needs --config or --inputs".into()));
            }
            let mut rows = Vec::new();
            for p in &args.inputs {
                rows.extend(read_aggregate_csv(p)?);
            }
            (rows, PathBuf::from("compare.svg"))
        }
    };
    let out = args.out.unwrap_or(default_out);
    harness::overlay_svg("exact value by iteration", &rows, &out)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn distinguish(args: DistinguishArgs) -> Result<ExitCode> {
    let link = LinkFunction::new(args.link, args.gamma)?;
    let mut r = rng::stream(args.seed);
    let report: DistinguishabilityReport = match args.gridworld {
        None => {
            let (mdp, pi0, pi1) = two_step_example(args.eps)?;
            definition_check(&mdp, &pi0, &pi1, &link, args.batch_size, args.samples, &mut r)?
        }
        Some(seed) => {
            let mut mdp = make_gridworld(seed)?;
            if args.normalized {
                mdp = mdp.normalized();
            }
            let normal = Normal::new(0.0, args.logit_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut draw = || -> Result<_> {
                let theta: Vec<f64> = (0..mdp.dim()).map(|_| normal.sample(&mut r)).collect();
                Ok(PolicyParams::for_mdp(&mdp, theta)?.to_table())
            };
            let (pi0, pi1) = (draw()?, draw()?);
            definition_check(&mdp, &pi0, &pi1, &link, args.batch_size, args.samples, &mut r)?
        }
    };
    println!("link:               {} (gamma {})", link.kind.as_str(), link.gamma);
    println!("batch size D:       {}", args.batch_size);
    println!("value gap:          {}", report.value_gap);
    println!("expected deviation: {} (se {})", report.expected_deviation, report.std_error);
    println!("rhs:                {}", report.rhs);
    println!("holds:              {}", report.holds);

    let fresh = !args.csv.exists() || std::fs::metadata(&args.csv)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(&args.csv)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(["link", "gamma", "D", "gap", "est", "se", "rhs", "holds"])?;
    }
    w.write_record([
        link.kind.as_str().to_string(),
        link.gamma.to_string(),
        args.batch_size.to_string(),
        report.value_gap.to_string(),
        report.expected_deviation.to_string(),
        report.std_error.to_string(),
        report.rhs.to_string(),
        report.holds.to_string(),
    ])?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn zo_bench(args: ZoBenchArgs) -> Result<ExitCode> {
    let method = match args.method {
        BenchMethod::ZoSgd => Method::ZoSgd,
        BenchMethod::ZoSignSgd => Method::ZoSignSgd { q: args.q },
        BenchMethod::ZspoSign => Method::ZspoSign,
    };
    let schedule = ScheduleConfig { lr_scale: args.lr_scale, mu: args.mu, horizon: args.horizon, iterations: args.iterations };
    let center = vec![1.0; args.dim];
    let theta0 = vec![0.0; args.dim];
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let objective: Box<dyn Objective> = match args.objective {
        BenchObjective::Quadratic => Box::new(ConcaveQuadratic::isotropic(center)),
        BenchObjective::Piecewise => Box::new(SmoothedPiecewise { center, delta: 0.5 }),
    };
    let rows = harness::zo_bench(objective.as_ref(), &schedule, method, &theta0, &seeds, args.stride)?;
    harness::write_zo_bench_csv(&rows, std::fs::File::create(&args.out)?)?;
    let finals: Vec<f64> = rows.iter().filter(|r| r.t == args.iterations + 1).filter_map(|r| r.grad_norm).collect();
    let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    println!("{}: mean final gradient norm {mean:.6} over {} seeds; wrote {}", method.name(), finals.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
