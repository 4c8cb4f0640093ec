//! Experiment orchestration: every (algorithm, repetition) cell runs on its
//! own derived seed, iterates are scored by their exact value, and results go
//! to CSV files plus a manifest that can be replayed.
//!
//! CSV schema v1. `raw.csv` and `aggregate.csv` share the header
//! `algo,rep,t,exact_value,ci_low,ci_high`. Raw rows leave the CI columns
//! empty. Aggregate rows use `rep = all`, the mean as `exact_value`, and the
//! 95% normal interval `mean -+ 1.96 s / sqrt(R)`. `selected.csv` lists the
//! randomized output iterate of each cell; `warnings.csv` lists failed cells,
//! which are excluded from aggregation.

mod config;
mod plot;

pub use config::{
    gridworld_experiment, AlgorithmSpec, Environment, ExperimentConfig, ZspoSpec, DEFAULT_ZSPO_LR_SCALE,
    DEFAULT_ZSPO_MU_SCALE, ENV_OUT_DIR, ENV_WORKERS,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dpo_run, rm_ppo_run, zpg_run};
use crate::error::{Error, Result};
use crate::mdp::{exact_value, PolicyParams, TabularMdp};
use crate::preference::Panel;
use crate::rng;
use crate::zo::{self, Method, Objective, ScheduleConfig};
use crate::zspo::{zspo_run, ParameterTrace, ZspoConfig};

pub const CSV_SCHEMA: &str = "v1";
pub const MANIFEST_FORMAT: &str = "zspo-manifest/v1";
pub const CSV_HEADER: [&str; 6] = ["algo", "rep", "t", "exact_value", "ci_low", "ci_high"];
/// Normal quantile of the two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub algo: String,
    pub rep: usize,
    pub t: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub algo: String,
    pub t: usize,
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl AggregateRow {
    pub fn ci_low(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn ci_high(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub algo: String,
    pub rep: usize,
    pub seed: u64,
    /// `ok`, `diverged` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// 1-based index of the randomized output iterate (ZSPO, ZPG).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_value: Option<f64>,
    pub trajectories: u64,
    pub panel_queries: u64,
    /// Reward-model pretraining pairs (RM+PPO only).
    pub pretrain_pairs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub raw: Vec<RawRow>,
    pub aggregate: Vec<AggregateRow>,
    pub cells: Vec<CellSummary>,
    /// Initial (uniform-policy) exact value of the environment.
    pub initial_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub code_version: String,
    pub csv_schema: String,
    pub stream_scheme: String,
    /// How cell seeds derive from the master seed.
    pub seed_derivation: String,
    pub wall_clock_seconds: f64,
    pub initial_value: f64,
    /// The configuration with every default resolved.
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
}

/// Seed of cell (`algo`, `rep`) under `master`.
pub fn cell_seed(master: u64, algo: &str, rep: usize) -> u64 {
    rng::derive(rng::derive_label(master, algo), rep as u64)
}

const SEED_DERIVATION: &str = "cell = derive(derive_label(master, algo), rep); iteration t = derive(cell, t)";

/// Sample mean and 95% half-width with the `n - 1` divisor; a single value
/// has half-width 0.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z_95 * var.sqrt() / (n as f64).sqrt())
}

/// Per-(algorithm, iteration) aggregates, algorithms in first-seen order.
pub fn aggregate(raw: &[RawRow]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for r in raw {
        if !order.contains(&r.algo.as_str()) {
            order.push(&r.algo);
        }
        groups.entry((&r.algo, r.t)).or_default().push(r.value);
    }
    order
        .iter()
        .flat_map(|algo| {
            groups.range((*algo, 0)..=(*algo, usize::MAX)).map(|((a, t), vals)| {
                let (mean, half_width) = mean_ci(vals);
                AggregateRow { algo: a.to_string(), t: *t, mean, half_width, n: vals.len() }
            })
        })
        .collect()
}

struct CellOutput {
    trace: ParameterTrace,
    pretrain_pairs: u64,
}

fn run_algorithm(mdp: &TabularMdp, panel: &Panel, spec: &AlgorithmSpec, seed: u64) -> Result<CellOutput> {
    let theta1 = vec![0.0; mdp.dim()];
    let trace = match spec {
        AlgorithmSpec::Zspo(z) => {
            let mut z = z.clone();
            z.resolve(mdp);
            let cfg = ZspoConfig {
                iterations: z.iterations,
                batches: z.batches,
                batch_size: z.batch_size,
                mu: z.mu.expect("resolved"),
                lr_scale: z.lr_scale,
                lr_horizon: z.lr_horizon.expect("resolved"),
                panel: *panel,
                seed,
            };
            zspo_run(mdp, &cfg, &theta1)?
        }
        AlgorithmSpec::Zpg(b) => {
            let b = crate::baselines::BaselineConfig { seed, ..b.clone() };
            zpg_run(mdp, &b, &b.assumed_link, panel, &theta1)?
        }
        AlgorithmSpec::RmPpo(b) => {
            let b = crate::baselines::BaselineConfig { seed, ..b.clone() };
            let (_, trace) = rm_ppo_run(mdp, panel, &b, &theta1)?;
            return Ok(CellOutput { trace, pretrain_pairs: b.rm_pairs as u64 });
        }
        AlgorithmSpec::Dpo(b) | AlgorithmSpec::OnlineDpo(b) => {
            let b = crate::baselines::BaselineConfig { seed, ..b.clone() };
            dpo_run(mdp, panel, &b, &theta1, matches!(spec, AlgorithmSpec::OnlineDpo(_)))?
        }
    };
    Ok(CellOutput { trace, pretrain_pairs: 0 })
}

fn value_of(mdp: &TabularMdp, theta: &[f64]) -> f64 {
    exact_value(mdp, &PolicyParams::for_mdp(mdp, theta.to_vec()).expect("trace dimension")).expect("valid policy")
}

/// Iterations at which the exact value is recorded: `1`, every `cadence`-th
/// after it, and `T`.
pub fn evaluation_points(iterations: usize, cadence: usize) -> Vec<usize> {
    (1..=iterations).filter(|&t| t == 1 || t == iterations || (t - 1) % cadence == 0).collect()
}

fn run_cell(
    mdp: &TabularMdp,
    panel: &Panel,
    spec: &AlgorithmSpec,
    master: u64,
    rep: usize,
    cadence: usize,
) -> (Vec<RawRow>, CellSummary) {
    let algo = spec.tag();
    let seed = cell_seed(master, algo, rep);
    let mut summary = CellSummary {
        algo: algo.into(),
        rep,
        seed,
        status: "ok".into(),
        message: None,
        selected: None,
        selected_value: None,
        final_value: None,
        trajectories: 0,
        panel_queries: 0,
        pretrain_pairs: 0,
    };
    let out = match run_algorithm(mdp, panel, spec, seed) {
        Ok(out) => out,
        Err(e) => {
            summary.status = if matches!(e, Error::Divergence { .. }) { "diverged" } else { "failed" }.into();
            summary.message = Some(e.to_string());
            return (vec![], summary);
        }
    };
    let trace = out.trace;
    let t_max = spec.iterations();
    let (per_traj, per_query) = spec.per_iteration_budget();
    debug_assert_eq!(trace.budget.trajectories, per_traj * t_max as u64, "{algo} trajectory budget");
    debug_assert_eq!(trace.budget.panel_queries, per_query * t_max as u64, "{algo} query budget");
    let rows: Vec<RawRow> = evaluation_points(t_max, cadence)
        .into_iter()
        .map(|t| RawRow { algo: algo.into(), rep, t, value: value_of(mdp, &trace.thetas[t - 1]) })
        .collect();
    if !trace.alphas.is_empty() {
        summary.selected = Some(trace.selected);
        summary.selected_value = Some(value_of(mdp, trace.selected_theta()));
    }
    summary.final_value = rows.last().map(|r| r.value);
    summary.trajectories = trace.budget.trajectories;
    summary.panel_queries = trace.budget.panel_queries;
    summary.pretrain_pairs = out.pretrain_pairs;
    (rows, summary)
}

/// Run every cell without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let mdp = config.environment.build()?;
    let cells: Vec<(usize, usize)> =
        (0..config.algorithms.len()).flat_map(|a| (0..config.repetitions).map(move |r| (a, r))).collect();
    let work = || -> Vec<(Vec<RawRow>, CellSummary)> {
        cells
            .par_iter()
            .map(|&(a, rep)| run_cell(&mdp, &config.panel, &config.algorithms[a], config.master_seed, rep, config.cadence))
            .collect()
    };
    let results = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut raw = Vec::new();
    let mut summaries = Vec::with_capacity(results.len());
    for (rows, s) in results {
        raw.extend(rows);
        summaries.push(s);
    }
    let aggregate = aggregate(&raw);
    let initial_value = exact_value(&mdp, &PolicyParams::uniform(&mdp))?;
    Ok(RunRecord { raw, aggregate, cells: summaries, initial_value })
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_raw_csv(rows: &[RawRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([r.algo.as_str(), &r.rep.to_string(), &r.t.to_string(), &fmt_f64(r.value), "", ""])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(rows: &[AggregateRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.algo.as_str(),
            "all",
            &r.t.to_string(),
            &fmt_f64(r.mean),
            &fmt_f64(r.ci_low()),
            &fmt_f64(r.ci_high()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("bad CSV field {} in {:?}", CSV_HEADER[i], rec)))
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(RawRow { algo: rec[0].to_string(), rep: parse_field(&rec, 1)?, t: parse_field(&rec, 2)?, value: parse_field(&rec, 3)? })
        })
        .collect()
}

/// Reads an aggregate CSV; the sample count is not stored and reads as 0.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let mean: f64 = parse_field(&rec, 3)?;
            let high: f64 = parse_field(&rec, 5)?;
            Ok(AggregateRow { algo: rec[0].to_string(), t: parse_field(&rec, 2)?, mean, half_width: high - mean, n: 0 })
        })
        .collect()
}

fn write_cells_csv(cells: &[CellSummary], path: &Path, failed_only: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if failed_only {
        w.write_record(["algo", "rep", "status", "message"])?;
    } else {
        w.write_record(["algo", "rep", "selected_t", "selected_value", "final_value"])?;
    }
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for c in cells {
        if failed_only && c.status != "ok" {
            w.write_record([c.algo.as_str(), &c.rep.to_string(), &c.status, c.message.as_deref().unwrap_or("")])?;
        } else if !failed_only && c.status == "ok" {
            let sel = c.selected.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([c.algo.as_str(), &c.rep.to_string(), &sel, &opt(c.selected_value), &opt(c.final_value)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write `raw.csv`, `aggregate.csv`, `selected.csv`, `warnings.csv` and
/// `manifest.toml` into `dir`. Returns the manifest path.
pub fn write_outputs(record: &RunRecord, resolved: &ExperimentConfig, dir: &Path, wall_clock_seconds: f64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_raw_csv(&record.raw, fs::File::create(dir.join("raw.csv"))?)?;
    write_aggregate_csv(&record.aggregate, fs::File::create(dir.join("aggregate.csv"))?)?;
    write_cells_csv(&record.cells, &dir.join("selected.csv"), false)?;
    write_cells_csv(&record.cells, &dir.join("warnings.csv"), true)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        csv_schema: CSV_SCHEMA.into(),
        stream_scheme: rng::STREAM_SCHEME.into(),
        seed_derivation: SEED_DERIVATION.into(),
        wall_clock_seconds,
        initial_value: record.initial_value,
        config: resolved.clone(),
        cells: record.cells.clone(),
    };
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(path)
}

/// Execute `config` and write its outputs to `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let mdp = config.environment.build()?;
    let resolved = config.resolved(&mdp);
    let start = Instant::now();
    let record = execute(&resolved)?;
    write_outputs(&record, &resolved, &config.output_dir, start.elapsed().as_secs_f64())?;
    Ok(record)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub original: PathBuf,
    pub replayed: PathBuf,
    pub identical: bool,
}

/// Re-run the configuration recorded in `manifest` into `out_dir` and compare
/// its `raw.csv` byte-for-byte with the one next to the manifest.
pub fn replay(manifest: &Path, out_dir: &Path) -> Result<ReplayOutcome> {
    let m = load_manifest(manifest)?;
    let mut cfg = m.config;
    cfg.output_dir = out_dir.to_path_buf();
    run_experiment(&cfg)?;
    let original = manifest.parent().unwrap_or(Path::new(".")).join("raw.csv");
    let replayed = out_dir.join("raw.csv");
    let identical = fs::read(&original)? == fs::read(&replayed)?;
    Ok(ReplayOutcome { original, replayed, identical })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Svg,
}

fn by_algorithm(rows: &[AggregateRow]) -> Vec<(String, Vec<AggregateRow>)> {
    let mut out: Vec<(String, Vec<AggregateRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(a, _)| *a == r.algo) {
            Some((_, v)) => v.push(r.clone()),
            None => out.push((r.algo.clone(), vec![r.clone()])),
        }
    }
    out
}

/// One curve file per algorithm (`curve_<algo>.csv` or `.svg`) in `dir`.
pub fn emit_curves(record: &RunRecord, format: CurveFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if record.aggregate.is_empty() {
        return Err(Error::InvalidArgument("run record has no aggregate rows".into()));
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (algo, rows) in by_algorithm(&record.aggregate) {
        let path = match format {
            CurveFormat::Csv => {
                let path = dir.join(format!("curve_{algo}.csv"));
                write_aggregate_csv(&rows, fs::File::create(&path)?)?;
                path
            }
            CurveFormat::Svg => {
                let path = dir.join(format!("curve_{algo}.svg"));
                fs::write(&path, plot::render_svg(&algo, &[(algo.clone(), rows)]))?;
                path
            }
        };
        paths.push(path);
    }
    Ok(paths)
}

/// Overlay the aggregate curves of several runs in one SVG.
pub fn overlay_svg(title: &str, rows: &[AggregateRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, plot::render_svg(title, &by_algorithm(rows)))?;
    Ok(())
}

/// One row of a zeroth-order benchmark trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoBenchRow {
    pub method: &'static str,
    pub seed: u64,
    pub t: usize,
    pub grad_norm: Option<f64>,
    pub f_value: f64,
}

/// Run `method` from `theta0` once per seed (in parallel) and keep every
/// `stride`-th iterate plus the last.
pub fn zo_bench<O: Objective + ?Sized>(
    objective: &O,
    schedule: &ScheduleConfig,
    method: Method,
    theta0: &[f64],
    seeds: &[u64],
    stride: usize,
) -> Result<Vec<ZoBenchRow>> {
    let stride = stride.max(1);
    let runs: Vec<Result<Vec<ZoBenchRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let trace = zo::run_ascent(objective, schedule, method, theta0, seed)?;
            let last = trace.len();
            Ok(trace
                .into_iter()
                .filter(|p| (p.t - 1) % stride == 0 || p.t == last)
                .map(|p| ZoBenchRow { method: method.name(), seed, t: p.t, grad_norm: p.grad_norm, f_value: p.f_value })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in runs {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_zo_bench_csv(rows: &[ZoBenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "seed", "t", "grad_norm", "f_value"])?;
    for r in rows {
        let g = r.grad_norm.map(fmt_f64).unwrap_or_default();
        w.write_record([r.method, &r.seed.to_string(), &r.t.to_string(), &g, &fmt_f64(r.f_value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Final-iteration aggregate row of `algo`.
pub fn final_row<'a>(record: &'a RunRecord, algo: &str) -> Option<&'a AggregateRow> {
    record.aggregate.iter().filter(|r| r.algo == algo).max_by_key(|r| r.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::LinkFunction;

    fn row(algo: &str, rep: usize, t: usize, value: f64) -> RawRow {
        RawRow { algo: algo.into(), rep, t, value }
    }

    #[test]
    fn ci_from_four_values() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // s = sqrt(5/3) = 1.2910, half-width = 1.96 s / 2.
        assert!((h - 1.96 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!((h - 1.2652).abs() < 5e-5);
    }

    #[test]
    fn constant_values_have_zero_width() {
        let raw: Vec<RawRow> = (0..5).map(|r| row("zspo", r, 1, 0.7)).collect();
        let agg = aggregate(&raw);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].half_width, 0.0);
        assert_eq!(agg[0].ci_low(), agg[0].ci_high());
    }

    #[test]
    fn aggregate_groups_by_algorithm_and_iteration() {
        let raw = vec![row("b", 0, 1, 1.0), row("b", 0, 2, 2.0), row("a", 0, 1, 5.0), row("b", 1, 1, 3.0), row("b", 1, 2, 4.0)];
        let agg = aggregate(&raw);
        let keys: Vec<(&str, usize, usize)> = agg.iter().map(|r| (r.algo.as_str(), r.t, r.n)).collect();
        assert_eq!(keys, [("b", 1, 2), ("b", 2, 2), ("a", 1, 1)]);
        assert_eq!(agg[0].mean, 2.0);
        assert_eq!(agg[1].mean, 3.0);
    }

    #[test]
    fn evaluation_points_cover_ends() {
        assert_eq!(evaluation_points(1, 1), [1]);
        assert_eq!(evaluation_points(10, 4), [1, 5, 9, 10]);
        assert_eq!(evaluation_points(9, 4), [1, 5, 9]);
    }

    #[test]
    fn csv_round_trip() {
        let raw = vec![row("zspo", 0, 1, 0.1), row("zspo", 1, 1, 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_raw_csv(&raw, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("algo,rep,t,exact_value,ci_low,ci_high\nzspo,0,1,0.1,,\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("raw.csv");
        fs::write(&p, &text).unwrap();
        assert_eq!(read_raw_csv(&p).unwrap(), raw);
    }

    #[test]
    fn single_point_curve() {
        let record = RunRecord {
            raw: vec![row("zspo", 0, 1, 0.25)],
            aggregate: aggregate(&[row("zspo", 0, 1, 0.25)]),
            cells: vec![],
            initial_value: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_curves(&record, CurveFormat::Csv, dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text, "algo,rep,t,exact_value,ci_low,ci_high\nzspo,all,1,0.25,0.25,0.25\n");
        let svg = emit_curves(&record, CurveFormat::Svg, dir.path()).unwrap();
        assert!(fs::read_to_string(&svg[0]).unwrap().starts_with("<svg"));
        let empty = RunRecord { raw: vec![], aggregate: vec![], cells: vec![], initial_value: 0.0 };
        assert!(emit_curves(&empty, CurveFormat::Csv, dir.path()).is_err());
    }

    #[test]
    fn cell_seeds_are_isolated_by_algorithm() {
        assert_ne!(cell_seed(1, "zspo", 0), cell_seed(1, "zpg", 0));
        assert_ne!(cell_seed(1, "zspo", 0), cell_seed(1, "zspo", 1));
        assert_eq!(cell_seed(1, "zspo", 3), cell_seed(1, "zspo", 3));
    }

    fn smoke(iterations: usize) -> ExperimentConfig {
        let mut cfg = gridworld_experiment(
            3,
            LinkFunction::logistic(1.0),
            10,
            AlgorithmSpec::from_tag("zspo", iterations, 4).unwrap(),
        )
        .unwrap();
        for tag in ["zpg", "dpo", "online-dpo", "rm-ppo"] {
            let mut spec = AlgorithmSpec::from_tag(tag, iterations, 4).unwrap();
            if let AlgorithmSpec::RmPpo(b) = &mut spec {
                b.rm_pairs = 50;
            }
            cfg.algorithms.push(spec);
        }
        cfg
    }

    #[test]
    fn smoke_run_emits_one_row_per_algorithm() {
        let record = execute(&smoke(1)).unwrap();
        assert_eq!(record.raw.len(), 5);
        assert!(record.cells.iter().all(|c| c.status == "ok"));
        let uniform = record.initial_value;
        assert!(record.raw.iter().all(|r| r.t == 1 && r.value == uniform));
    }

    #[test]
    fn budgets_match_declared_per_iteration_cost() {
        let cfg = smoke(3);
        let record = execute(&cfg).unwrap();
        for (spec, cell) in cfg.algorithms.iter().zip(&record.cells) {
            let (traj, queries) = spec.per_iteration_budget();
            assert_eq!(cell.trajectories, 3 * traj, "{}", cell.algo);
            assert_eq!(cell.panel_queries, 3 * queries, "{}", cell.algo);
        }
    }
}
