//! Zeroth-order sign policy optimization from panel preferences.
//!
//! Each iteration perturbs the softmax logits with a Gaussian direction,
//! samples `N` pairs of size-`D` trajectory batches from the current and the
//! perturbed policy, asks the panel which batch of each pair is better, and
//! steps along `+v` or `-v` according to the majority of the `N` answers. The
//! link function of the panel is never used by the optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{exact_value, PolicyParams, Sampler, TabularMdp};
use crate::preference::Panel;
use crate::rng::{self, Stream};
use crate::zo::{self, ScheduleConfig, Sign, SignOracle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZspoConfig {
    /// `T`
    pub iterations: usize,
    /// `N`, batch pairs (panel queries) per iteration.
    pub batches: usize,
    /// `D`, trajectories per batch.
    pub batch_size: usize,
    /// Fixed perturbation radius `mu`.
    pub mu: f64,
    /// `c` in `alpha_t = c * sqrt(H / (d t))`.
    pub lr_scale: f64,
    /// `H` in the learning-rate schedule.
    pub lr_horizon: f64,
    pub panel: Panel,
    pub seed: u64,
}

impl ZspoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batches == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("T, N and D must all be at least 1".into()));
        }
        self.schedule().validate()
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig { lr_scale: self.lr_scale, mu: self.mu, horizon: self.lr_horizon, iterations: self.iterations }
    }
}

/// `mu = scale * sqrt(max(1/sqrt(N), H/sqrt(D)) / d)`.
pub fn corollary_perturbation(d: usize, n: usize, batch_size: usize, horizon: f64, scale: f64) -> f64 {
    let inner = (1.0 / (n as f64).sqrt()).max(horizon / (batch_size as f64).sqrt());
    scale * (inner / d as f64).sqrt()
}

/// Sampling and query counts of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub trajectories: u64,
    pub panel_queries: u64,
}

/// Iterates of a training run, `T + 1` of them (`theta_1 .. theta_{T+1}`).
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTrace {
    pub thetas: Vec<Vec<f64>>,
    /// Exact value of each iterate, where evaluated.
    pub values: Vec<Option<f64>>,
    /// Per-iteration vote tally `sum_n o_{t,n}` (ZSPO only).
    pub tallies: Vec<u64>,
    pub alphas: Vec<f64>,
    /// 1-based index `R` of the randomized output iterate.
    pub selected: usize,
    pub budget: Budget,
}

impl ParameterTrace {
    pub fn selected_theta(&self) -> &[f64] {
        &self.thetas[self.selected - 1]
    }

    pub fn final_theta(&self) -> &[f64] {
        self.thetas.last().expect("trace is never empty")
    }

    /// Fill `values` with the exact value of every `cadence`-th iterate (and
    /// always the first and last). Training never reads these.
    pub fn evaluate(&mut self, mut value: impl FnMut(&[f64]) -> f64, cadence: usize) {
        let last = self.thetas.len();
        self.values = self
            .thetas
            .iter()
            .enumerate()
            .map(|(i, th)| {
                let t = i + 1;
                (t == 1 || t == last || (cadence > 0 && (t - 1) % cadence == 0)).then(|| value(th))
            })
            .collect();
    }
}

/// Draw `R` in `1..=T` with `P(R = t) = alpha_t / sum_i alpha_i`.
pub fn select_output(alphas: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = alphas.iter().sum();
    if !(total > 0.0) {
        return 1;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, a) in alphas.iter().enumerate() {
        if u < *a {
            return i + 1;
        }
        u -= a;
    }
    alphas.len()
}

/// Where the batch mean returns compared by the panel come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSource {
    /// `D` sampled trajectories per batch.
    Sampled,
    /// The exact policy value stands in for the batch mean (the `D -> inf`
    /// limit); no trajectories are sampled.
    ExactValue,
}

/// Majority-vote sign of `V(pi_theta') - V(pi_theta)` from panel preferences.
pub struct PreferenceSign<'a> {
    pub mdp: &'a TabularMdp,
    pub panel: Panel,
    pub batches: usize,
    pub batch_size: usize,
    pub source: BatchSource,
    pub tallies: Vec<u64>,
    pub budget: Budget,
}

impl<'a> PreferenceSign<'a> {
    pub fn new(mdp: &'a TabularMdp, panel: Panel, batches: usize, batch_size: usize) -> Self {
        Self { mdp, panel, batches, batch_size, source: BatchSource::Sampled, tallies: vec![], budget: Budget::default() }
    }

    pub fn with_source(mut self, source: BatchSource) -> Self {
        self.source = source;
        self
    }

    fn params(&self, theta: &[f64]) -> Result<PolicyParams> {
        PolicyParams::for_mdp(self.mdp, theta.to_vec())
    }

    /// Vote tally over the `N` batch pairs. Pair `n` uses its own stream
    /// derived from a key drawn from `rng`.
    pub fn tally(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<u64> {
        let base: u64 = rng.random();
        let (p1, p0) = (self.params(perturbed)?, self.params(current)?);
        let mut votes = 0u64;
        match self.source {
            BatchSource::Sampled => {
                let s1 = Sampler::from_params(self.mdp, &p1)?;
                let s0 = Sampler::from_params(self.mdp, &p0)?;
                let d = self.batch_size as f64;
                for n in 0..self.batches {
                    let mut r = rng::stream(rng::pair_key(base, n));
                    let mean0 = (0..self.batch_size).map(|_| s0.sample_return(&mut r)).sum::<f64>() / d;
                    let mean1 = (0..self.batch_size).map(|_| s1.sample_return(&mut r)).sum::<f64>() / d;
                    votes += self.panel.majority(mean1 - mean0, &mut r) as u64;
                }
                self.budget.trajectories += 2 * (self.batches * self.batch_size) as u64;
            }
            BatchSource::ExactValue => {
                let gap = exact_value(self.mdp, &p1)? - exact_value(self.mdp, &p0)?;
                for n in 0..self.batches {
                    let mut r = rng::stream(rng::pair_key(base, n));
                    votes += self.panel.majority(gap, &mut r) as u64;
                }
            }
        }
        self.budget.panel_queries += self.batches as u64;
        self.tallies.push(votes);
        Ok(votes)
    }
}

/// `sign[sum_n (o_n - 1/2)]`.
pub fn majority_sign(tally: u64, batches: usize) -> Sign {
    Sign::of(2.0 * tally as f64 - batches as f64)
}

impl SignOracle for PreferenceSign<'_> {
    fn compare(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<Sign> {
        let t = self.tally(perturbed, current, rng)?;
        Ok(majority_sign(t, self.batches))
    }
}

/// `theta' = theta + mu v` with `v ~ N(0, I_d)`.
pub fn perturb(theta: &[f64], mu: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let v = zo::gaussian_vector(theta.len(), rng);
    (zo::axpy(theta, mu, &v), v)
}

/// Ascent direction `sign[sum_n (o_n - 1/2)] v` from `N` panel queries
/// comparing batches from `pi_theta'` against batches from `pi_theta`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_ascent_direction(
    mdp: &TabularMdp,
    theta: &[f64],
    theta_perturbed: &[f64],
    v: &[f64],
    panel: &Panel,
    batches: usize,
    batch_size: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if batches == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("N and D must be at least 1".into()));
    }
    let mut oracle = PreferenceSign::new(mdp, *panel, batches, batch_size);
    let s = oracle.compare(theta_perturbed, theta, rng)?.as_f64();
    Ok(v.iter().map(|x| s * x).collect())
}

/// Full training loop on `mdp` from `theta1`, with any sign oracle.
pub fn run_with_oracle(
    oracle: &mut (impl SignOracle + ?Sized),
    config: &ZspoConfig,
    theta1: &[f64],
) -> Result<ParameterTrace> {
    config.validate()?;
    let run = zo::run_sign_ascent(oracle, &config.schedule(), theta1, config.seed)?;
    let selected = select_output(&run.alphas, &mut rng::stream(rng::derive(config.seed, rng::tags::SELECT)));
    Ok(ParameterTrace {
        values: vec![None; run.thetas.len()],
        thetas: run.thetas,
        tallies: vec![],
        alphas: run.alphas,
        selected,
        budget: Budget::default(),
    })
}

/// Preference-driven training on `mdp`. Values are not evaluated; see
/// [`ParameterTrace::evaluate`].
pub fn zspo_run(mdp: &TabularMdp, config: &ZspoConfig, theta1: &[f64]) -> Result<ParameterTrace> {
    if theta1.len() != mdp.dim() {
        return Err(Error::DimensionMismatch { expected: mdp.dim(), actual: theta1.len() });
    }
    let mut oracle = PreferenceSign::new(mdp, config.panel, config.batches, config.batch_size);
    let mut trace = run_with_oracle(&mut oracle, config, theta1)?;
    trace.tallies = oracle.tallies;
    trace.budget = oracle.budget;
    Ok(trace)
}
