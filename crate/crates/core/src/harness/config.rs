use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::gridworld::make_gridworld;
use crate::mdp::TabularMdp;
use crate::preference::{LinkFunction, Panel};
use crate::zspo::corollary_perturbation;

/// Environment variable overriding [`ExperimentConfig::output_dir`].
pub const ENV_OUT_DIR: &str = "ZSPO_OUT_DIR";
/// Environment variable overriding [`ExperimentConfig::workers`].
pub const ENV_WORKERS: &str = "ZSPO_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    Gridworld { seed: u64 },
    /// JSON file in the [`crate::mdp::MdpFile`] layout.
    File { path: PathBuf },
}

impl Environment {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            Environment::Gridworld { seed } => make_gridworld(*seed),
            Environment::File { path } => TabularMdp::from_json(&std::fs::read_to_string(path)?),
        }
    }
}

/// ZSPO settings. `mu = None` resolves to the corollary choice scaled by
/// `mu_scale`; `lr_horizon = None` resolves to the MDP horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZspoSpec {
    pub iterations: usize,
    pub batches: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub mu_scale: f64,
    pub lr_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_horizon: Option<f64>,
}

impl Default for ZspoSpec {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batches: 1000,
            batch_size: 1,
            mu: None,
            mu_scale: DEFAULT_ZSPO_MU_SCALE,
            lr_scale: DEFAULT_ZSPO_LR_SCALE,
            lr_horizon: None,
        }
    }
}

/// Step scale `c`, pilot-calibrated on GridWorld (T = N = 200, D = 1).
pub const DEFAULT_ZSPO_LR_SCALE: f64 = 4.0;
/// Constant in front of the corollary perturbation; `sqrt(10)` makes
/// `mu = 1` on GridWorld with `D = 1`, the pilot optimum.
pub const DEFAULT_ZSPO_MU_SCALE: f64 = 3.162_277_660_168_379_5;

impl ZspoSpec {
    /// Fill `mu` and `lr_horizon` from the environment.
    pub fn resolve(&mut self, mdp: &TabularMdp) {
        let h = mdp.horizon() as f64;
        if self.mu.is_none() {
            self.mu = Some(corollary_perturbation(mdp.dim(), self.batches, self.batch_size, h, self.mu_scale));
        }
        if self.lr_horizon.is_none() {
            self.lr_horizon = Some(h);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "kebab-case")]
pub enum AlgorithmSpec {
    Zspo(ZspoSpec),
    Zpg(BaselineConfig),
    RmPpo(BaselineConfig),
    Dpo(BaselineConfig),
    OnlineDpo(BaselineConfig),
}

impl AlgorithmSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            AlgorithmSpec::Zspo(_) => "zspo",
            AlgorithmSpec::Zpg(_) => "zpg",
            AlgorithmSpec::RmPpo(_) => "rm-ppo",
            AlgorithmSpec::Dpo(_) => "dpo",
            AlgorithmSpec::OnlineDpo(_) => "online-dpo",
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            AlgorithmSpec::Zspo(z) => z.iterations,
            AlgorithmSpec::Zpg(b) | AlgorithmSpec::RmPpo(b) | AlgorithmSpec::Dpo(b) | AlgorithmSpec::OnlineDpo(b) => {
                b.iterations
            }
        }
    }

    /// Default settings for `tag` with the given `T` and `N`.
    pub fn from_tag(tag: &str, iterations: usize, batches: usize) -> Result<Self> {
        let base = BaselineConfig { iterations, batches, ..Default::default() };
        Ok(match tag {
            "zspo" => AlgorithmSpec::Zspo(ZspoSpec { iterations, batches, ..Default::default() }),
            "zpg" => AlgorithmSpec::Zpg(base),
            "rm-ppo" => AlgorithmSpec::RmPpo(base),
            "dpo" => AlgorithmSpec::Dpo(base),
            "online-dpo" => AlgorithmSpec::OnlineDpo(base),
            other => return Err(Error::Config(format!("unknown algorithm `{other}`"))),
        })
    }

    /// Trajectories and panel queries the algorithm spends per iteration.
    pub fn per_iteration_budget(&self) -> (u64, u64) {
        match self {
            AlgorithmSpec::Zspo(z) => (2 * (z.batches * z.batch_size) as u64, z.batches as u64),
            AlgorithmSpec::Zpg(b) | AlgorithmSpec::Dpo(b) | AlgorithmSpec::OnlineDpo(b) => {
                (2 * b.batches as u64, b.batches as u64)
            }
            AlgorithmSpec::RmPpo(b) => (b.batches as u64, 0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AlgorithmSpec::Zspo(z) => {
                if z.iterations == 0 || z.batches == 0 || z.batch_size == 0 {
                    return Err(Error::Config("zspo: iterations, batches and batch_size must be positive".into()));
                }
                if let Some(mu) = z.mu {
                    if !(mu > 0.0) {
                        return Err(Error::Config(format!("zspo: mu must be positive, got {mu}")));
                    }
                }
                if !(z.lr_scale >= 0.0) || !(z.mu_scale > 0.0) {
                    return Err(Error::Config("zspo: lr_scale must be >= 0 and mu_scale > 0".into()));
                }
                Ok(())
            }
            AlgorithmSpec::Zpg(b) => {
                b.validate()?;
                if !b.assumed_link.is_invertible() {
                    return Err(Error::Config(format!("zpg: assumed link {} is not invertible", b.assumed_link)));
                }
                Ok(())
            }
            AlgorithmSpec::RmPpo(b) | AlgorithmSpec::Dpo(b) | AlgorithmSpec::OnlineDpo(b) => b.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub master_seed: u64,
    pub repetitions: usize,
    /// Evaluate the exact value every `cadence` iterations (plus the first
    /// and last).
    #[serde(default = "one")]
    pub cadence: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub environment: Environment,
    /// True panel: link, `gamma` and `panelists`.
    pub panel: Panel,
    pub algorithms: Vec<AlgorithmSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.algorithms {
            if !seen.insert(a.tag()) {
                return Err(Error::Config(format!("algorithm `{}` listed twice", a.tag())));
            }
            a.validate()?;
        }
        Panel::new(self.panel.link, self.panel.size)?;
        if let Environment::File { path } = &self.environment {
            if !path.is_file() {
                return Err(Error::Config(format!("environment file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// Apply [`ENV_OUT_DIR`] and [`ENV_WORKERS`] from `lookup`.
    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(dir) = lookup(ENV_OUT_DIR) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Some(w) = lookup(ENV_WORKERS) {
            let n = w.trim().parse().map_err(|_| Error::Config(format!("{ENV_WORKERS}={w} is not a count")))?;
            self.workers = Some(n);
        }
        Ok(())
    }

    pub fn apply_env_overrides(&mut self) -> Result<()> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    /// Copy with environment-dependent defaults filled in.
    pub fn resolved(&self, mdp: &TabularMdp) -> Self {
        let mut out = self.clone();
        for a in &mut out.algorithms {
            if let AlgorithmSpec::Zspo(z) = a {
                z.resolve(mdp);
            }
        }
        out
    }
}

/// A single-algorithm configuration on GridWorld, as assembled by the `train`
/// subcommand.
pub fn gridworld_experiment(env_seed: u64, link: LinkFunction, panelists: usize, algorithm: AlgorithmSpec) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        name: algorithm.tag().to_string(),
        master_seed: 0,
        repetitions: 1,
        cadence: 1,
        output_dir: default_out(),
        workers: None,
        environment: Environment::Gridworld { seed: env_seed },
        panel: Panel::new(link, panelists)?,
        algorithms: vec![algorithm],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"
master_seed = 7
repetitions = 3
output_dir = "out/sample"

[environment]
kind = "gridworld"
seed = 1

[panel]
kind = "logistic"
gamma = 1.0
panelists = 100

[[algorithms]]
algo = "zspo"
iterations = 20
batches = 10
lr_scale = 0.5

[[algorithms]]
algo = "zpg"
iterations = 20
batches = 10
assumed_link = { kind = "logistic", gamma = 1.0 }

[[algorithms]]
algo = "online-dpo"
iterations = 20
batches = 10
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.cadence, 1);
        assert_eq!(cfg.panel.size, 100);
        assert_eq!(cfg.algorithms.len(), 3);
        match &cfg.algorithms[0] {
            AlgorithmSpec::Zspo(z) => {
                assert_eq!(z.batch_size, 1);
                assert_eq!(z.lr_scale, 0.5);
                assert_eq!(z.mu, None);
            }
            other => panic!("{other:?}"),
        }
        match &cfg.algorithms[2] {
            AlgorithmSpec::OnlineDpo(b) => assert_eq!(b.beta, 0.1),
            other => panic!("{other:?}"),
        }
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn resolves_corollary_perturbation() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let mdp = cfg.environment.build().unwrap();
        let r = cfg.resolved(&mdp);
        match &r.algorithms[0] {
            // sqrt(10) * sqrt(max(1/sqrt(10), 10/1) / 100) = 1
            AlgorithmSpec::Zspo(z) => {
                assert!((z.mu.unwrap() - 1.0).abs() < 1e-12);
                assert_eq!(z.lr_horizon, Some(10.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.algorithms.push(cfg.algorithms[0].clone());
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        if let AlgorithmSpec::Zpg(b) = &mut cfg.algorithms[1] {
            b.assumed_link = LinkFunction::step();
        }
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.environment = Environment::File { path: "/nonexistent/mdp.json".into() };
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::from_toml(&SAMPLE.replace("\"zpg\"", "\"ppo\"")).is_err());
        assert!(AlgorithmSpec::from_tag("ppo", 1, 1).is_err());
    }

    #[test]
    fn environment_overrides() {
        let mut cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.apply_overrides(|k| match k {
            ENV_OUT_DIR => Some("/tmp/elsewhere".into()),
            ENV_WORKERS => Some("3".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/elsewhere"));
        assert_eq!(cfg.workers, Some(3));
        assert!(cfg.apply_overrides(|k| (k == ENV_WORKERS).then(|| "many".into())).is_err());
    }
}
