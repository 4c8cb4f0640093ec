//! DPO with soft panel labels on trajectory pairs. The implicit reward of a
//! trajectory is `beta * sum_h log(pi(a_h | s_h) / pi_ref(a_h | s_h))`.

use super::{add_score, check_dim, check_panel, rollout_steps, BaselineConfig};
use crate::error::{Error, Result};
use crate::mdp::{PolicyParams, Sampler, TabularMdp};
use crate::preference::Panel;
use crate::rng;
use crate::zo;
use crate::zspo::{Budget, ParameterTrace};

/// Two trajectories from the current policy and the fraction of panelists
/// preferring `one`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpoPair {
    pub one: Vec<(usize, usize)>,
    pub zero: Vec<(usize, usize)>,
    pub label: f64,
}

fn log_policy(mdp: &TabularMdp, theta: &[f64]) -> Result<Vec<f64>> {
    let params = PolicyParams::for_mdp(mdp, theta.to_vec())?;
    let mut out = Vec::with_capacity(theta.len());
    for s in 0..mdp.num_states() {
        let logits = params.logits(s);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        out.extend(logits.iter().map(|x| x - lse));
    }
    Ok(out)
}

fn implicit_margin(pair: &DpoPair, logp: &[f64], logp_ref: &[f64], na: usize, beta: f64) -> f64 {
    let sum = |steps: &[(usize, usize)]| -> f64 {
        steps.iter().map(|&(s, a)| logp[s * na + a] - logp_ref[s * na + a]).sum()
    };
    beta * (sum(&pair.one) - sum(&pair.zero))
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Mean soft-label DPO loss `-[p log s(h) + (1 - p) log s(-h)]`.
pub fn dpo_loss(mdp: &TabularMdp, pairs: &[DpoPair], theta: &[f64], theta_ref: &[f64], beta: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (logp, logp_ref) = (log_policy(mdp, theta)?, log_policy(mdp, theta_ref)?);
    let na = mdp.num_actions();
    let total: f64 = pairs
        .iter()
        .map(|pair| {
            let h = implicit_margin(pair, &logp, &logp_ref, na, beta);
            -(pair.label * log_sigmoid(h) + (1.0 - pair.label) * log_sigmoid(-h))
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

fn dpo_gradient(mdp: &TabularMdp, pairs: &[DpoPair], theta: &[f64], logp_ref: &[f64], beta: f64) -> Result<Vec<f64>> {
    let params = PolicyParams::for_mdp(mdp, theta.to_vec())?;
    let policy = params.to_table();
    let logp = log_policy(mdp, theta)?;
    let na = mdp.num_actions();
    let mut grad = vec![0.0; theta.len()];
    for pair in pairs {
        let h = implicit_margin(pair, &logp, logp_ref, na, beta);
        let w = beta * (0.5 + 0.5 * (0.5 * h).tanh() - pair.label);
        for &(s, a) in &pair.one {
            add_score(&mut grad, &policy, s, a, w);
        }
        for &(s, a) in &pair.zero {
            add_score(&mut grad, &policy, s, a, -w);
        }
    }
    let n = pairs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// `epochs` full-batch gradient-descent steps on the DPO loss.
fn minimize(
    mdp: &TabularMdp,
    pairs: &[DpoPair],
    theta: &[f64],
    theta_ref: &[f64],
    config: &BaselineConfig,
) -> Result<Vec<f64>> {
    let logp_ref = log_policy(mdp, theta_ref)?;
    let mut next = theta.to_vec();
    for _ in 0..config.epochs {
        let g = dpo_gradient(mdp, pairs, &next, &logp_ref, config.beta)?;
        next = zo::axpy(&next, -config.dpo_lr, &g);
    }
    Ok(next)
}

/// Offline DPO keeps the initial policy as reference; `online` replaces the
/// reference with the current policy after each update.
pub fn dpo_run(
    mdp: &TabularMdp,
    panel: &Panel,
    config: &BaselineConfig,
    theta1: &[f64],
    online: bool,
) -> Result<ParameterTrace> {
    config.validate()?;
    check_panel(panel)?;
    check_dim(mdp, theta1)?;
    let mut reference = theta1.to_vec();
    let mut theta = theta1.to_vec();
    let mut thetas = Vec::with_capacity(config.iterations + 1);
    let mut budget = Budget::default();
    for t in 1..=config.iterations {
        let mut r = rng::stream(rng::iteration_key(config.seed, t));
        let sampler = Sampler::from_params(mdp, &PolicyParams::for_mdp(mdp, theta.clone())?)?;
        let pairs: Vec<DpoPair> = (0..config.batches)
            .map(|_| {
                let (one, r1) = rollout_steps(&sampler, &mut r);
                let (zero, r0) = rollout_steps(&sampler, &mut r);
                let label = panel.vote_fraction(r1 - r0, &mut r);
                DpoPair { one, zero, label }
            })
            .collect();
        budget.trajectories += 2 * config.batches as u64;
        budget.panel_queries += config.batches as u64;
        let next = minimize(mdp, &pairs, &theta, &reference, config)?;
        thetas.push(std::mem::replace(&mut theta, next));
        let n = zo::norm(&theta);
        if !(n <= zo::DIVERGENCE_NORM) {
            return Err(Error::Divergence { iteration: t, norm: n });
        }
        if online {
            reference.clone_from(&theta);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::make_gridworld;
    use crate::preference::LinkFunction;

    fn sample_pairs(mdp: &TabularMdp, theta: &[f64], n: usize, label: Option<f64>) -> Vec<DpoPair> {
        let panel = Panel::new(LinkFunction::logistic(1.0), 100).unwrap();
        let sampler = Sampler::from_params(mdp, &PolicyParams::for_mdp(mdp, theta.to_vec()).unwrap()).unwrap();
        let mut r = rng::stream(9);
        (0..n)
            .map(|_| {
                let (one, r1) = rollout_steps(&sampler, &mut r);
                let (zero, r0) = rollout_steps(&sampler, &mut r);
                let p = label.unwrap_or_else(|| panel.vote_fraction(r1 - r0, &mut r));
                DpoPair { one, zero, label: p }
            })
            .collect()
    }

    #[test]
    fn symmetric_labels_are_stationary() {
        let mdp = make_gridworld(2).unwrap();
        let theta = vec![0.0; mdp.dim()];
        let pairs = sample_pairs(&mdp, &theta, 200, Some(0.5));
        let cfg = BaselineConfig::default();
        let next = minimize(&mdp, &pairs, &theta, &theta, &cfg).unwrap();
        assert!(zo::norm(&next) < 1e-12);
    }

    #[test]
    fn loss_decreases_over_inner_epochs() {
        let mdp = make_gridworld(3).unwrap();
        let theta = vec![0.0; mdp.dim()];
        let pairs = sample_pairs(&mdp, &theta, 200, None);
        let cfg = BaselineConfig::default();
        let logp_ref = log_policy(&mdp, &theta).unwrap();
        let mut cur = theta.clone();
        let mut last = dpo_loss(&mdp, &pairs, &cur, &theta, cfg.beta).unwrap();
        for _ in 0..cfg.epochs {
            let g = dpo_gradient(&mdp, &pairs, &cur, &logp_ref, cfg.beta).unwrap();
            cur = zo::axpy(&cur, -cfg.dpo_lr, &g);
            let now = dpo_loss(&mdp, &pairs, &cur, &theta, cfg.beta).unwrap();
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mdp = make_gridworld(4).unwrap();
        let theta: Vec<f64> = (0..mdp.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
        let theta_ref = vec![0.0; mdp.dim()];
        let pairs = sample_pairs(&mdp, &theta, 50, None);
        let g = dpo_gradient(&mdp, &pairs, &theta, &log_policy(&mdp, &theta_ref).unwrap(), 0.7).unwrap();
        let h = 1e-5;
        for i in [0, 13, 48, 99] {
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let fd = (dpo_loss(&mdp, &pairs, &up, &theta_ref, 0.7).unwrap()
                - dpo_loss(&mdp, &pairs, &dn, &theta_ref, 0.7).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-7 + 1e-5 * fd.abs(), "{i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn online_reference_update_changes_the_trace() {
        let mdp = make_gridworld(5).unwrap();
        let panel = Panel::new(LinkFunction::logistic(1.0), 100).unwrap();
        let cfg = BaselineConfig { iterations: 4, batches: 50, dpo_lr: 0.5, seed: 11, ..Default::default() };
        let theta1 = vec![0.0; mdp.dim()];
        let off = dpo_run(&mdp, &panel, &cfg, &theta1, false).unwrap();
        let on = dpo_run(&mdp, &panel, &cfg, &theta1, true).unwrap();
        assert_eq!(off.thetas[..2], on.thetas[..2]);
        assert_ne!(off.thetas[2], on.thetas[2]);
        assert_eq!(on.budget.trajectories, 4 * 2 * 50);
        assert_eq!(on.budget.panel_queries, 4 * 50);
    }
}
