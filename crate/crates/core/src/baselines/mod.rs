//! Comparison algorithms that assume a known (logistic) link: zeroth-order
//! policy gradient with link inversion, reward-model learning followed by
//! PPO, and offline/online DPO. All operate on tabular softmax policies.

mod dpo;
mod ppo;
mod reward_model;
mod zpg;

pub use dpo::{dpo_loss, dpo_run, DpoPair};
pub use ppo::{ppo_run, PpoBatch};
pub use reward_model::{bt_negative_log_likelihood, pretrain_stream, rm_train, RewardModel};
pub use zpg::{run_two_point, zpg_run, DifferenceEstimator, ExactDifference, PreferenceDifference};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, Sampler, TabularMdp};
use crate::preference::{LinkFunction, Panel};
use crate::zspo::ParameterTrace;

/// Hyperparameters shared by the baselines. Defaults follow the GridWorld
/// experiment protocol; ZPG's `mu` and step scale and the inner learning
/// rates are pilot-calibrated choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub iterations: usize,
    /// Trajectory pairs (ZPG, DPO) or trajectories (PPO) per iteration.
    pub batches: usize,
    /// KL weight for PPO and DPO.
    pub beta: f64,
    pub epochs: usize,
    /// ZPG clamps estimated preference probabilities into `[trim, 1 - trim]`.
    pub trim: f64,
    /// ZPG perturbation radius.
    pub mu: f64,
    /// ZPG step `alpha_t = zpg_lr_scale * sqrt(lr_horizon / (d t))`.
    pub zpg_lr_scale: f64,
    pub lr_horizon: f64,
    /// Link ZPG assumes when inverting preference probabilities.
    pub assumed_link: LinkFunction,
    pub rm_pairs: usize,
    pub rm_lr: f64,
    pub rm_minibatch: usize,
    pub ppo_lr: f64,
    pub ppo_clip: f64,
    pub dpo_lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batches: 1000,
            beta: 0.1,
            epochs: 5,
            trim: 0.001,
            mu: 1.0,
            zpg_lr_scale: 4.0,
            lr_horizon: 10.0,
            assumed_link: LinkFunction::logistic(1.0),
            rm_pairs: 500_000,
            rm_lr: 0.05,
            rm_minibatch: 256,
            ppo_lr: 0.05,
            ppo_clip: 0.2,
            dpo_lr: 0.05,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batches == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("iterations, batches and epochs must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("KL weight must be >= 0, got {}", self.beta)));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::InvalidArgument(format!("trim must be in [0, 1/2), got {}", self.trim)));
        }
        Ok(())
    }
}

/// Reward-model pretraining on `rm_pairs` uniform-policy pairs followed by
/// PPO on the learned reward. Pretraining draws from its own stream.
pub fn rm_ppo_run(
    mdp: &TabularMdp,
    panel: &Panel,
    config: &BaselineConfig,
    theta1: &[f64],
) -> Result<(RewardModel, ParameterTrace)> {
    config.validate()?;
    check_panel(panel)?;
    let mut r = pretrain_stream(config.seed);
    let model = rm_train(mdp, panel, config.rm_pairs, config.epochs, config.rm_lr, config.rm_minibatch, &mut r)?;
    let trace = ppo_run(mdp, &model, config, theta1)?;
    Ok((model, trace))
}

/// Recorded episode for gradient computations.
pub(crate) fn rollout_steps(sampler: &Sampler<'_>, rng: &mut crate::rng::Stream) -> (Vec<(usize, usize)>, f64) {
    let mut steps = Vec::new();
    let ret = sampler.rollout(rng, |s, a| steps.push((s, a)));
    (steps, ret)
}

/// Adds `w * d log pi(a | s) / d theta` to `grad` for a softmax policy.
#[inline]
pub(crate) fn add_score(grad: &mut [f64], policy: &PolicyTable, s: usize, a: usize, w: f64) {
    let na = policy.num_actions();
    let row = policy.row(s);
    let g = &mut grad[s * na..(s + 1) * na];
    for (b, (gb, pb)) in g.iter_mut().zip(row).enumerate() {
        *gb += w * (if b == a { 1.0 } else { 0.0 } - pb);
    }
}

pub(crate) fn check_panel(panel: &Panel) -> Result<()> {
    Panel::new(panel.link, panel.size).map(|_| ())
}

pub(crate) fn check_dim(mdp: &TabularMdp, theta: &[f64]) -> Result<()> {
    if theta.len() != mdp.dim() {
        return Err(Error::DimensionMismatch { expected: mdp.dim(), actual: theta.len() });
    }
    Ok(())
}
