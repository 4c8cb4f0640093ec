//! Zeroth-order policy gradient that recovers return differences by inverting
//! an assumed link function.

use rand::Rng;

use super::{check_dim, check_panel, BaselineConfig};
use crate::error::{Error, Result};
use crate::mdp::{exact_value, PolicyParams, Sampler, TabularMdp};
use crate::preference::{LinkFunction, Panel};
use crate::rng::{self, Stream};
use crate::zo::{self, ScheduleConfig};
use crate::zspo::{select_output, Budget, ParameterTrace};

/// Estimates `V(pi_perturbed) - V(pi_current)`.
pub trait DifferenceEstimator {
    fn estimate(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<f64>;
}

/// The exact value gap, for checking the estimator plumbing.
pub struct ExactDifference<'a> {
    pub mdp: &'a TabularMdp,
}

impl DifferenceEstimator for ExactDifference<'_> {
    fn estimate(&mut self, perturbed: &[f64], current: &[f64], _rng: &mut Stream) -> Result<f64> {
        let v1 = exact_value(self.mdp, &PolicyParams::for_mdp(self.mdp, perturbed.to_vec())?)?;
        let v0 = exact_value(self.mdp, &PolicyParams::for_mdp(self.mdp, current.to_vec())?)?;
        Ok(v1 - v0)
    }
}

/// Mean over `N` trajectory pairs of `sigma_assumed^{-1}(p_hat)`, where
/// `p_hat` is the fraction of the true panel preferring the perturbed
/// policy's trajectory, clamped into `[trim, 1 - trim]`.
pub struct PreferenceDifference<'a> {
    pub mdp: &'a TabularMdp,
    pub panel: Panel,
    pub assumed: LinkFunction,
    pub pairs: usize,
    pub trim: f64,
    pub budget: Budget,
}

impl<'a> PreferenceDifference<'a> {
    pub fn new(mdp: &'a TabularMdp, panel: Panel, assumed: LinkFunction, pairs: usize, trim: f64) -> Result<Self> {
        if !assumed.is_invertible() {
            return Err(Error::NonInvertible(assumed.to_string()));
        }
        Ok(Self { mdp, panel, assumed, pairs, trim, budget: Budget::default() })
    }

    /// Clamp and invert one estimated preference probability.
    pub fn recover(&self, p_hat: f64) -> Result<f64> {
        self.assumed.inverse(p_hat.clamp(self.trim, 1.0 - self.trim))
    }
}

impl DifferenceEstimator for PreferenceDifference<'_> {
    fn estimate(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<f64> {
        let base: u64 = rng.random();
        let s1 = Sampler::from_params(self.mdp, &PolicyParams::for_mdp(self.mdp, perturbed.to_vec())?)?;
        let s0 = Sampler::from_params(self.mdp, &PolicyParams::for_mdp(self.mdp, current.to_vec())?)?;
        let mut total = 0.0;
        for n in 0..self.pairs {
            let mut r = rng::stream(rng::pair_key(base, n));
            let r0 = s0.sample_return(&mut r);
            let r1 = s1.sample_return(&mut r);
            let p_hat = self.panel.vote_fraction(r1 - r0, &mut r);
            total += self.recover(p_hat)?;
        }
        self.budget.trajectories += 2 * self.pairs as u64;
        self.budget.panel_queries += self.pairs as u64;
        Ok(total / self.pairs as f64)
    }
}

/// Two-point ascent `theta += alpha_t * (diff / mu) * v` using any
/// difference estimator; streams follow [`zo::run_ascent`].
pub fn run_two_point(
    estimator: &mut (impl DifferenceEstimator + ?Sized),
    schedule: &ScheduleConfig,
    theta1: &[f64],
    seed: u64,
) -> Result<ParameterTrace> {
    schedule.validate()?;
    let d = theta1.len();
    let mut thetas = Vec::with_capacity(schedule.iterations + 1);
    let mut alphas = Vec::with_capacity(schedule.iterations);
    let mut theta = theta1.to_vec();
    for t in 1..=schedule.iterations {
        let mut r = rng::stream(rng::iteration_key(seed, t));
        let v = zo::gaussian_vector(d, &mut r);
        let diff = estimator.estimate(&zo::axpy(&theta, schedule.mu, &v), &theta, &mut r)?;
        let scale = diff / schedule.mu;
        let g: Vec<f64> = v.into_iter().map(|x| scale * x).collect();
        let alpha = schedule.learning_rate(t, d);
        let next = zo::axpy(&theta, alpha, &g);
        thetas.push(std::mem::replace(&mut theta, next));
        alphas.push(alpha);
        let n = zo::norm(&theta);
        if !(n <= zo::DIVERGENCE_NORM) {
            return Err(Error::Divergence { iteration: t, norm: n });
        }
    }
    thetas.push(theta);
    let selected = select_output(&alphas, &mut rng::stream(rng::derive(seed, rng::tags::SELECT)));
    Ok(ParameterTrace {
        values: vec![None; thetas.len()],
        thetas,
        tallies: vec![],
        alphas,
        selected,
        budget: Budget::default(),
    })
}

pub fn zpg_run(
    mdp: &TabularMdp,
    config: &BaselineConfig,
    assumed_link: &LinkFunction,
    true_panel: &Panel,
    theta1: &[f64],
) -> Result<ParameterTrace> {
    config.validate()?;
    check_panel(true_panel)?;
    check_dim(mdp, theta1)?;
    let mut est = PreferenceDifference::new(mdp, *true_panel, *assumed_link, config.batches, config.trim)?;
    let schedule = ScheduleConfig {
        lr_scale: config.zpg_lr_scale,
        mu: config.mu,
        horizon: config.lr_horizon,
        iterations: config.iterations,
    };
    let mut trace = run_two_point(&mut est, &schedule, theta1, config.seed)?;
    trace.budget = est.budget;
    Ok(trace)
}
