//! Tabular PPO on a learned reward: clipped surrogate with Monte-Carlo
//! advantages plus a KL penalty toward the initial policy.

use super::reward_model::RewardModel;
use super::{check_dim, rollout_steps, BaselineConfig};
use crate::error::{Error, Result};
use crate::mdp::{PolicyParams, PolicyTable, Sampler, TabularMdp};
use crate::rng;
use crate::zo;
use crate::zspo::{Budget, ParameterTrace};

/// Advantage statistics of one iteration's rollouts, aggregated per
/// (state, action) so the inner epochs do not revisit trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoBatch {
    num_actions: usize,
    /// Sum of positive / negative advantages per (s, a).
    adv_pos: Vec<f64>,
    adv_neg: Vec<f64>,
    /// Visits per state.
    visits: Vec<f64>,
    trajectories: usize,
}

impl PpoBatch {
    /// Advantage of step `h` is the learned reward collected after it, minus
    /// the batch mean of the same quantity at step `h`.
    pub fn from_rollouts(
        rollouts: &[Vec<(usize, usize)>],
        reward: &RewardModel,
        num_states: usize,
        num_actions: usize,
    ) -> Self {
        let horizon = rollouts.first().map_or(0, Vec::len);
        let to_go: Vec<Vec<f64>> = rollouts
            .iter()
            .map(|steps| {
                let mut acc = 0.0;
                let mut out = vec![0.0; steps.len()];
                for h in (0..steps.len()).rev() {
                    out[h] = acc;
                    acc += reward.reward_table[steps[h].0];
                }
                out
            })
            .collect();
        let n = rollouts.len() as f64;
        let baseline: Vec<f64> = (0..horizon).map(|h| to_go.iter().map(|g| g[h]).sum::<f64>() / n).collect();
        let mut adv_pos = vec![0.0; num_states * num_actions];
        let mut adv_neg = vec![0.0; num_states * num_actions];
        let mut visits = vec![0.0; num_states];
        for (steps, g) in rollouts.iter().zip(&to_go) {
            for (h, &(s, a)) in steps.iter().enumerate() {
                let adv = g[h] - baseline[h];
                if adv > 0.0 {
                    adv_pos[s * num_actions + a] += adv;
                } else {
                    adv_neg[s * num_actions + a] += adv;
                }
                visits[s] += 1.0;
            }
        }
        Self { num_actions, adv_pos, adv_neg, visits, trajectories: rollouts.len() }
    }

    /// Gradient of `surrogate - beta * KL(pi || pi_ref)`, per trajectory.
    fn ascent_gradient(&self, current: &PolicyTable, old: &PolicyTable, reference: &PolicyTable, beta: f64, clip: f64) -> Vec<f64> {
        let na = self.num_actions;
        let mut grad = vec![0.0; self.adv_pos.len()];
        for (s, &visits) in self.visits.iter().enumerate() {
            if visits == 0.0 {
                continue;
            }
            let (pi, old_row, ref_row) = (current.row(s), old.row(s), reference.row(s));
            let g = &mut grad[s * na..(s + 1) * na];
            for a in 0..na {
                let k = s * na + a;
                if self.adv_pos[k] == 0.0 && self.adv_neg[k] == 0.0 {
                    continue;
                }
                let ratio = pi[a] / old_row[a];
                // The clipped branch has zero gradient.
                let mut coef = 0.0;
                if ratio <= 1.0 + clip {
                    coef += self.adv_pos[k];
                }
                if ratio >= 1.0 - clip {
                    coef += self.adv_neg[k];
                }
                coef *= ratio;
                for (b, gb) in g.iter_mut().enumerate() {
                    *gb += coef * (if b == a { 1.0 } else { 0.0 } - pi[b]);
                }
            }
            if beta > 0.0 {
                let kl: f64 = pi.iter().zip(ref_row).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum();
                for (b, gb) in g.iter_mut().enumerate() {
                    if pi[b] > 0.0 {
                        *gb -= beta * visits * pi[b] * ((pi[b] / ref_row[b]).ln() - kl);
                    }
                }
            }
        }
        let n = self.trajectories as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        grad
    }
}

fn table(mdp: &TabularMdp, theta: &[f64]) -> Result<PolicyTable> {
    Ok(PolicyParams::for_mdp(mdp, theta.to_vec())?.to_table())
}

/// PPO iterations on the learned reward, starting (and anchored) at `theta1`.
pub fn ppo_run(
    mdp: &TabularMdp,
    reward_model: &RewardModel,
    config: &BaselineConfig,
    theta1: &[f64],
) -> Result<ParameterTrace> {
    config.validate()?;
    check_dim(mdp, theta1)?;
    if reward_model.reward_table.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch { expected: mdp.num_states(), actual: reward_model.reward_table.len() });
    }
    let reference = table(mdp, theta1)?;
    let mut theta = theta1.to_vec();
    let mut thetas = Vec::with_capacity(config.iterations + 1);
    let mut budget = Budget::default();
    for t in 1..=config.iterations {
        let mut r = rng::stream(rng::iteration_key(config.seed, t));
        let old = table(mdp, &theta)?;
        let sampler = Sampler::new(mdp, &old)?;
        let rollouts: Vec<Vec<(usize, usize)>> =
            (0..config.batches).map(|_| rollout_steps(&sampler, &mut r).0).collect();
        budget.trajectories += config.batches as u64;
        let batch = PpoBatch::from_rollouts(&rollouts, reward_model, mdp.num_states(), mdp.num_actions());
        let mut next = theta.clone();
        for _ in 0..config.epochs {
            let current = table(mdp, &next)?;
            let g = batch.ascent_gradient(&current, &old, &reference, config.beta, config.ppo_clip);
            next = zo::axpy(&next, config.ppo_lr, &g);
        }
        thetas.push(std::mem::replace(&mut theta, next));
        let n = zo::norm(&theta);
        if !(n <= zo::DIVERGENCE_NORM) {
            return Err(Error::Divergence { iteration: t, norm: n });
        }
    }
    thetas.push(theta);
    Ok(ParameterTrace {
        values: vec![None; thetas.len()],
        selected: thetas.len(),
        thetas,
        tallies: vec![],
        alphas: vec![],
        budget,
    })
}
