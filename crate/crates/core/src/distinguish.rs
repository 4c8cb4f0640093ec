//! How well panelists can tell two policies apart from batched trajectory
//! comparisons: Monte-Carlo expected deviation, the per-pair distinguishability
//! inequality, the closed-form `eps_0` bound, and the two-step example whose
//! trajectory preferences can contradict the value ordering.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{exact_value_table, PolicyTable, Sampler, TabularMdp};
use crate::preference::{LinkFunction, LinkKind};
use crate::rng::Stream;

/// Minimum Monte-Carlo sample count accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

/// Width of the Monte-Carlo margin (in standard errors) used by
/// [`definition_check`].
pub const CHECK_MARGIN_SE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistinguishabilityReport {
    /// `V(pi_1) - V(pi_0)`.
    pub value_gap: f64,
    pub expected_deviation: f64,
    pub std_error: f64,
    /// `varsigma(gap / 2) / 2`.
    pub rhs: f64,
    pub holds: bool,
}

/// Monte-Carlo mean and standard error of `varsigma(rbar(D_1) - rbar(D_0))`
/// over `n_samples` independent pairs of size-`batch_size` batches.
pub fn expected_deviation(
    mdp: &TabularMdp,
    pi0: &PolicyTable,
    pi1: &PolicyTable,
    link: &LinkFunction,
    batch_size: usize,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<(f64, f64)> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    if batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let s0 = Sampler::new(mdp, pi0)?;
    let s1 = Sampler::new(mdp, pi1)?;
    let d = batch_size as f64;
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..n_samples {
        let r0: f64 = (0..batch_size).map(|_| s0.sample_return(rng)).sum::<f64>() / d;
        let r1: f64 = (0..batch_size).map(|_| s1.sample_return(rng)).sum::<f64>() / d;
        let x = link.deviation(r1 - r0);
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = n_samples as f64;
    Ok((mean, (m2 / (n - 1.0) / n).sqrt()))
}

/// Compares the estimated expected deviation (allowing a 3-standard-error
/// margin) against `varsigma(gap / 2) / 2` at the exact value gap.
pub fn definition_check(
    mdp: &TabularMdp,
    pi0: &PolicyTable,
    pi1: &PolicyTable,
    link: &LinkFunction,
    batch_size: usize,
    n_samples: usize,
    rng: &mut Stream,
) -> Result<DistinguishabilityReport> {
    let value_gap = exact_value_table(mdp, pi1)? - exact_value_table(mdp, pi0)?;
    let (est, se) = expected_deviation(mdp, pi0, pi1, link, batch_size, n_samples, rng)?;
    let rhs = 0.5 * link.deviation(value_gap / 2.0);
    Ok(DistinguishabilityReport {
        value_gap,
        expected_deviation: est,
        std_error: se,
        rhs,
        holds: est + CHECK_MARGIN_SE * se >= rhs,
    })
}

/// `eps_0 = (4H / sqrt(D)) * sqrt(2 ln(2 / varsigma(H / sqrt(D))))`, an upper
/// bound on the distinguishability constant for returns in `[0, H]`.
pub fn epsilon_zero_bound(link: &LinkFunction, horizon: f64, batch_size: usize) -> Result<f64> {
    if link.kind == LinkKind::Step {
        return Err(Error::InvalidArgument("the step link is not strictly increasing; eps_0 is undefined".into()));
    }
    if !(horizon > 0.0) || batch_size == 0 {
        return Err(Error::InvalidArgument("horizon and batch size must be positive".into()));
    }
    let scale = horizon / (batch_size as f64).sqrt();
    let dev = link.deviation(scale);
    if !(dev > 0.0) {
        return Err(Error::InvalidArgument(format!("deviation at {scale} is {dev}, must be positive")));
    }
    Ok(4.0 * scale * (2.0 * (2.0 / dev).ln()).sqrt())
}

/// State indices of the two-step example.
pub mod two_step {
    pub const S0: usize = 0;
    /// Reached by `a1`, reward 1.
    pub const S1: usize = 1;
    /// Reached by `a2`, reward 2.
    pub const S2: usize = 2;
    /// Reached by `a3` with probability 0.2, reward 5.
    pub const S3: usize = 3;
    /// Reached by `a3` with probability 0.8, reward 0.
    pub const S4: usize = 4;
    pub const REWARDS: [f64; 5] = [0.0, 1.0, 2.0, 5.0, 0.0];
}

/// Two-step MDP from `s0` with three actions, and the fixed policies
/// `pi0` (always `a1`) and `pi1` (`a2` w.p. `eps`, `a3` otherwise).
/// Second-step states have a single meaningful action; all actions there
/// self-loop.
pub fn two_step_example(eps: f64) -> Result<(TabularMdp, PolicyTable, PolicyTable)> {
    use two_step::*;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps must lie in [0, 1], got {eps}")));
    }
    let (ns, na) = (5, 3);
    let mut p = vec![0.0; ns * na * ns];
    let mut set = |s: usize, a: usize, s2: usize, prob: f64| p[(s * na + a) * ns + s2] = prob;
    set(S0, 0, S1, 1.0);
    set(S0, 1, S2, 1.0);
    set(S0, 2, S3, 0.2);
    set(S0, 2, S4, 0.8);
    for s in S1..=S4 {
        for a in 0..na {
            set(s, a, s, 1.0);
        }
    }
    let mut init = vec![0.0; ns];
    init[S0] = 1.0;
    let mdp = TabularMdp::new(ns, na, 2, p, REWARDS.to_vec(), init)?;
    let policy = |first: [f64; 3]| {
        let mut probs = first.to_vec();
        for _ in S1..=S4 {
            probs.extend([1.0, 0.0, 0.0]);
        }
        PolicyTable::new(ns, na, probs)
    };
    Ok((mdp, policy([1.0, 0.0, 0.0])?, policy([0.0, eps, 1.0 - eps])?))
}

/// Exact distribution of the trajectory return, merged over equal returns and
/// sorted ascending. Enumerates every path, so only for small MDPs.
pub fn return_distribution(mdp: &TabularMdp, policy: &PolicyTable, max_paths: usize) -> Result<Vec<(f64, f64)>> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch { expected: mdp.dim(), actual: policy.num_states() * policy.num_actions() });
    }
    // Frontier of (state, probability, return so far) after each step.
    let mut frontier: Vec<(usize, f64, f64)> =
        mdp.initial_dist().iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(s, &p)| (s, p, 0.0)).collect();
    for h in 0..mdp.horizon() {
        let mut next = Vec::new();
        for &(s, p, r) in &frontier {
            let r = r + mdp.reward()[s];
            if h + 1 == mdp.horizon() {
                next.push((s, p, r));
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s2, &ps) in mdp.transition_row(s, a).iter().enumerate() {
                    if ps > 0.0 {
                        next.push((s2, p * pa * ps, r));
                    }
                }
            }
            if next.len() > max_paths {
                return Err(Error::InvalidArgument(format!("more than {max_paths} paths")));
            }
        }
        frontier = next;
    }
    let mut out: Vec<(f64, f64)> = frontier.into_iter().map(|(_, p, r)| (r, p)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    Ok(out)
}

/// `E[varsigma(r1 - r0)]` for independent single trajectories with the given
/// return distributions.
pub fn exact_expected_deviation(link: &LinkFunction, dist0: &[(f64, f64)], dist1: &[(f64, f64)]) -> f64 {
    dist1.iter().flat_map(|&(r1, p1)| dist0.iter().map(move |&(r0, p0)| p0 * p1 * link.deviation(r1 - r0))).sum()
}

/// `P(tau_1 preferred over tau_0)` in the two-step example with `D = 1`.
pub fn two_step_preference_probability(link: &LinkFunction, eps: f64) -> Result<f64> {
    Ok(0.5 + two_step_deviation(link, eps)?)
}

fn two_step_deviation(link: &LinkFunction, eps: f64) -> Result<f64> {
    let (mdp, pi0, pi1) = two_step_example(eps)?;
    let d0 = return_distribution(&mdp, &pi0, 16)?;
    let d1 = return_distribution(&mdp, &pi1, 16)?;
    Ok(exact_expected_deviation(link, &d0, &d1))
}

/// Bisection tolerance on `eps` for [`sign_threshold`].
pub const THRESHOLD_TOL: f64 = 1e-9;

/// Smallest `eps` in `[0, 1]` at which the two-step example's expected
/// deviation stops being negative, by bisection on the exact enumeration.
pub fn sign_threshold(link: &LinkFunction) -> Result<f64> {
    bisect_sign_change(|eps| two_step_deviation(link, eps))
}

/// Expected deviations this close to zero count as zero; they arise from
/// rounding when the link is linear over the example's return range.
const ZERO_TOL: f64 = 1e-14;

fn bisect_sign_change(f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (f_lo, f_hi) = (f(0.0)?, f(1.0)?);
    if f_lo.abs() <= ZERO_TOL {
        return Ok(0.0);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::NoCrossing { at_zero: f_lo, at_one: f_hi });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
