//! Tabular reward model fitted by Bradley-Terry maximum likelihood on panel
//! vote fractions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PolicyParams, Sampler, TabularMdp};
use crate::preference::Panel;
use crate::rng::{self, Stream};

/// Learned per-state reward; identifiable only up to an additive constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub reward_table: Vec<f64>,
}

impl RewardModel {
    pub fn trajectory_return(&self, states: impl IntoIterator<Item = usize>) -> f64 {
        states.into_iter().map(|s| self.reward_table[s]).sum()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { reward_table: self.reward_table.iter().map(|r| r + c).collect() }
    }
}

/// Preference data: per pair, the visited states of both trajectories and the
/// fraction of panelists preferring the first.
#[derive(Clone, Debug)]
pub(crate) struct PairData {
    horizon: usize,
    /// `2 * horizon` states per pair: trajectory 1 then trajectory 0.
    states: Vec<u16>,
    labels: Vec<f64>,
}

impl PairData {
    fn len(&self) -> usize {
        self.labels.len()
    }

    /// `sum_h onehot(s1_h) - onehot(s0_h)` applied to `reward`.
    fn margin(&self, i: usize, reward: &[f64]) -> f64 {
        let (one, zero) = self.pair(i);
        one.iter().map(|&s| reward[s as usize]).sum::<f64>() - zero.iter().map(|&s| reward[s as usize]).sum::<f64>()
    }

    fn pair(&self, i: usize) -> (&[u16], &[u16]) {
        let h = self.horizon;
        let row = &self.states[2 * h * i..2 * h * (i + 1)];
        row.split_at(h)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    0.5 + 0.5 * (0.5 * x).tanh()
}

/// Mean Bradley-Terry negative log-likelihood of soft labels.
#[cfg(test)]
fn mean_nll(data: &PairData, reward: &[f64]) -> f64 {
    let n = data.len();
    (0..n)
        .map(|i| {
            let m = data.margin(i, reward);
            let p = data.labels[i];
            -(p * log_sigmoid(m) + (1.0 - p) * log_sigmoid(-m))
        })
        .sum::<f64>()
        / n as f64
}

/// Bradley-Terry negative log-likelihood of `reward` on the given margins
/// (`r(tau1) - r(tau0)` under the true reward is not needed, only the visited
/// state sequences and labels).
pub fn bt_negative_log_likelihood(pairs: &[(Vec<usize>, Vec<usize>, f64)], reward: &[f64]) -> f64 {
    let n = pairs.len() as f64;
    pairs
        .iter()
        .map(|(one, zero, p)| {
            let m: f64 = one.iter().map(|&s| reward[s]).sum::<f64>() - zero.iter().map(|&s| reward[s]).sum::<f64>();
            -(p * log_sigmoid(m) + (1.0 - p) * log_sigmoid(-m))
        })
        .sum::<f64>()
        / n
}

pub(crate) fn collect_pairs(
    mdp: &TabularMdp,
    panel: &Panel,
    num_pairs: usize,
    rng: &mut Stream,
) -> Result<PairData> {
    if mdp.num_states() > u16::MAX as usize {
        return Err(Error::InvalidModel("too many states for the pair store".into()));
    }
    let sampler = Sampler::from_params(mdp, &PolicyParams::uniform(mdp))?;
    let h = mdp.horizon();
    let mut states = Vec::with_capacity(2 * h * num_pairs);
    let mut labels = Vec::with_capacity(num_pairs);
    for _ in 0..num_pairs {
        let r1 = sampler.rollout(rng, |s, _| states.push(s as u16));
        let mark = states.len();
        let r0 = sampler.rollout(rng, |s, _| states.push(s as u16));
        // Keep the "trajectory 1 first" layout.
        debug_assert_eq!(states.len() - mark, h);
        labels.push(panel.vote_fraction(r1 - r0, rng));
    }
    Ok(PairData { horizon: h, states, labels })
}

/// Fit a tabular reward by minibatch SGD on the logistic (Bradley-Terry)
/// likelihood of panel vote fractions. Pairs are sampled from the uniform
/// policy. The logistic link is assumed regardless of the panel's true link.
pub fn rm_train(
    mdp: &TabularMdp,
    panel: &Panel,
    num_pairs: usize,
    epochs: usize,
    lr: f64,
    minibatch: usize,
    rng: &mut Stream,
) -> Result<RewardModel> {
    if num_pairs == 0 {
        return Err(Error::InvalidArgument("reward model needs at least one preference pair".into()));
    }
    if epochs == 0 || minibatch == 0 {
        return Err(Error::InvalidArgument("epochs and minibatch must be positive".into()));
    }
    let data = collect_pairs(mdp, panel, num_pairs, rng)?;
    Ok(fit(&data, mdp.num_states(), epochs, lr, minibatch, rng))
}

pub(crate) fn fit(
    data: &PairData,
    num_states: usize,
    epochs: usize,
    lr: f64,
    minibatch: usize,
    rng: &mut impl Rng,
) -> RewardModel {
    let mut reward = vec![0.0; num_states];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; num_states];
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(minibatch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let w = sigmoid(data.margin(i, &reward)) - data.labels[i];
                let (one, zero) = data.pair(i);
                for &s in one {
                    grad[s as usize] += w;
                }
                for &s in zero {
                    grad[s as usize] -= w;
                }
            }
            let scale = lr / chunk.len() as f64;
            for (r, g) in reward.iter_mut().zip(&grad) {
                *r -= scale * g;
            }
        }
    }
    RewardModel { reward_table: reward }
}

/// Pretraining stream of a run keyed by `seed`.
pub fn pretrain_stream(seed: u64) -> Stream {
    rng::stream(rng::derive(seed, rng::tags::PRETRAIN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::LinkFunction;

    /// Two states; from either state action 0 goes to state 0 and action 1 to
    /// state 1. Rewards (0, 1); start in either state with equal probability.
    fn toy() -> TabularMdp {
        #[rustfmt::skip]
        let p = vec![
            1.0, 0.0,   0.0, 1.0,
            1.0, 0.0,   0.0, 1.0,
        ];
        TabularMdp::new(2, 2, 3, p, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn zero_pairs_is_an_error() {
        let panel = Panel::new(LinkFunction::logistic(1.0), 10).unwrap();
        assert!(rm_train(&toy(), &panel, 0, 5, 0.05, 256, &mut rng::stream(0)).is_err());
    }

    #[test]
    fn recovers_reward_gap_under_logistic_truth() {
        let mdp = toy();
        let panel = Panel::new(LinkFunction::logistic(1.0), 100).unwrap();
        let mut r = rng::stream(1);
        let data = collect_pairs(&mdp, &panel, 100_000, &mut r).unwrap();
        let model = fit(&data, 2, 5, 0.5, 256, &mut r);
        let learned = model.reward_table[1] - model.reward_table[0];
        assert!((learned - 1.0).abs() <= 0.05, "learned gap {learned}");

        // Independent check: brute-force likelihood grid over the gap.
        let best = (0..=400)
            .map(|k| k as f64 * 0.005)
            .min_by(|a, b| {
                mean_nll(&data, &[0.0, *a]).partial_cmp(&mean_nll(&data, &[0.0, *b])).unwrap()
            })
            .unwrap();
        assert!((best - 1.0).abs() <= 0.05, "grid optimum {best}");
        assert!((learned - best).abs() <= 0.02, "sgd {learned} vs grid {best}");
    }

    #[test]
    fn likelihood_is_shift_invariant() {
        let pairs = vec![(vec![0, 1, 1], vec![0, 0, 1], 0.7), (vec![1, 1, 1], vec![0, 0, 0], 0.9)];
        let a = bt_negative_log_likelihood(&pairs, &[0.2, 0.9]);
        let b = bt_negative_log_likelihood(&pairs, &[5.2, 5.9]);
        assert!((a - b).abs() < 1e-12);
    }
}
