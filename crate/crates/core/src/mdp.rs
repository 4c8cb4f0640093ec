//! Finite episodic MDPs with state-based rewards, tabular softmax policies,
//! trajectory sampling, and exact dynamic-programming oracles for the value
//! and its policy gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// Finite episodic MDP. Rewards depend on the state only; the return of a
/// trajectory is the sum of the rewards of the `horizon` visited states.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Flat `[state][action][next_state]`.
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    generator_seed: Option<u64>,
    /// Sparse cumulative rows per (state, action), used for sampling.
    cdf_rows: Vec<Vec<(usize, f64)>>,
    initial_cdf: Vec<(usize, f64)>,
}

impl PartialEq for TabularMdp {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.horizon == other.horizon
            && self.transition == other.transition
            && self.reward == other.reward
            && self.initial_dist == other.initial_dist
            && self.generator_seed == other.generator_seed
    }
}

fn sparse_cdf(probs: &[f64]) -> Vec<(usize, f64)> {
    let mut acc = 0.0;
    let mut out: Vec<(usize, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| {
            acc += p;
            (i, acc)
        })
        .collect();
    if let Some(last) = out.last_mut() {
        last.1 = f64::INFINITY;
    }
    out
}

#[inline]
fn draw(cdf: &[(usize, f64)], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    for &(i, c) in cdf {
        if u < c {
            return i;
        }
    }
    cdf.last().map(|&(i, _)| i).unwrap_or(0)
}

fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition` is flat `[s][a][s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("need at least one state and one action".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        let expect = num_states * num_actions * num_states;
        if transition.len() != expect {
            return Err(Error::DimensionMismatch { expected: expect, actual: transition.len() });
        }
        if reward.len() != num_states {
            return Err(Error::DimensionMismatch { expected: num_states, actual: reward.len() });
        }
        if initial_dist.len() != num_states {
            return Err(Error::DimensionMismatch { expected: num_states, actual: initial_dist.len() });
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("reward has a non-finite entry".into()));
        }
        check_distribution("initial distribution", &initial_dist)?;
        let cdf_rows = transition
            .chunks(num_states)
            .enumerate()
            .map(|(k, row)| {
                check_distribution(
                    &format!("transition row (s={}, a={})", k / num_actions, k % num_actions),
                    row,
                )?;
                Ok(sparse_cdf(row))
            })
            .collect::<Result<Vec<_>>>()?;
        let initial_cdf = sparse_cdf(&initial_dist);
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            reward,
            initial_dist,
            generator_seed: None,
            cdf_rows,
            initial_cdf,
        })
    }

    pub fn with_generator_seed(mut self, seed: u64) -> Self {
        self.generator_seed = Some(seed);
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Policy dimension `d = |S| * |A|`.
    pub fn dim(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn generator_seed(&self) -> Option<u64> {
        self.generator_seed
    }

    /// `P(. | s, a)` as a dense row.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Smallest and largest achievable trajectory return.
    pub fn return_bounds(&self) -> (f64, f64) {
        let lo = self.reward.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = self.horizon as f64;
        (h * lo, h * hi)
    }

    /// Same dynamics with rewards mapped affinely onto `[0, 1]`, so every
    /// trajectory return lies in `[0, H]`. A constant reward map becomes all
    /// zeros.
    pub fn normalized(&self) -> Self {
        let lo = self.reward.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut out = self.clone();
        out.reward = self
            .reward
            .iter()
            .map(|r| if span > 0.0 { (r - lo) / span } else { 0.0 })
            .collect();
        out
    }

    /// Replace the reward table, keeping the dynamics.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.num_states {
            return Err(Error::DimensionMismatch { expected: self.num_states, actual: reward.len() });
        }
        let mut out = self.clone();
        out.reward = reward;
        Ok(out)
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.num_states != self.num_states || policy.num_actions != self.num_actions {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: policy.probs.len() });
        }
        Ok(())
    }
}

/// Softmax logits, one per state-action pair, stored row-major by state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(num_states: usize, num_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: num_states * num_actions,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("policy logits must be finite".into()));
        }
        Ok(Self { num_states, num_actions, theta })
    }

    /// All-zero logits: the uniform policy.
    pub fn uniform(mdp: &TabularMdp) -> Self {
        Self { num_states: mdp.num_states, num_actions: mdp.num_actions, theta: vec![0.0; mdp.dim()] }
    }

    /// Wrap a raw vector for `mdp`, checking its dimension.
    pub fn for_mdp(mdp: &TabularMdp, theta: Vec<f64>) -> Result<Self> {
        Self::new(mdp.num_states, mdp.num_actions, theta)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn logits(&self, state: usize) -> &[f64] {
        &self.theta[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn to_table(&self) -> PolicyTable {
        let mut probs = vec![0.0; self.theta.len()];
        for (row, out) in self.theta.chunks(self.num_actions).zip(probs.chunks_mut(self.num_actions)) {
            softmax_into(row, out);
        }
        PolicyTable { num_states: self.num_states, num_actions: self.num_actions, probs }
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// `pi(. | state)` for a softmax policy, stabilized by subtracting the row max.
pub fn softmax_action_probs(params: &PolicyParams, state: usize) -> Result<Vec<f64>> {
    if state >= params.num_states {
        return Err(Error::StateOutOfRange { index: state, num_states: params.num_states });
    }
    let mut out = vec![0.0; params.num_actions];
    softmax_into(params.logits(state), &mut out);
    Ok(out)
}

/// Explicit stationary stochastic policy `pi(a | s)`, row-major by state.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch { expected: num_states * num_actions, actual: probs.len() });
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(&format!("policy row {s}"), row)?;
        }
        Ok(Self { num_states, num_actions, probs })
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Largest per-state total-variation distance to `other`.
    pub fn max_tv_distance(&self, other: &PolicyTable) -> f64 {
        self.probs
            .chunks(self.num_actions)
            .zip(other.probs.chunks(other.num_actions))
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// One sampled episode: exactly `H` (state, action) pairs and its return.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub return_value: f64,
}

impl Trajectory {
    /// Number of visits to each state.
    pub fn state_counts(&self, num_states: usize) -> Vec<f64> {
        let mut c = vec![0.0; num_states];
        for &(s, _) in &self.steps {
            c[s] += 1.0;
        }
        c
    }
}

/// Pre-sampled cumulative policy rows for repeated rollouts.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    mdp: &'a TabularMdp,
    policy_cdf: Vec<Vec<(usize, f64)>>,
}

impl<'a> Sampler<'a> {
    pub fn new(mdp: &'a TabularMdp, policy: &PolicyTable) -> Result<Self> {
        mdp.check_policy(policy)?;
        let policy_cdf = policy.probs.chunks(policy.num_actions).map(sparse_cdf).collect();
        Ok(Self { mdp, policy_cdf })
    }

    pub fn from_params(mdp: &'a TabularMdp, params: &PolicyParams) -> Result<Self> {
        Self::new(mdp, &params.to_table())
    }

    /// Roll out one episode, calling `visit(state, action)` per step, and
    /// return the trajectory return.
    #[inline]
    pub fn rollout(&self, rng: &mut impl Rng, mut visit: impl FnMut(usize, usize)) -> f64 {
        let mdp = self.mdp;
        let mut s = draw(&mdp.initial_cdf, rng);
        let mut ret = 0.0;
        for h in 0..mdp.horizon {
            ret += mdp.reward[s];
            let a = draw(&self.policy_cdf[s], rng);
            visit(s, a);
            if h + 1 < mdp.horizon {
                s = draw(&mdp.cdf_rows[s * mdp.num_actions + a], rng);
            }
        }
        ret
    }

    pub fn sample_return(&self, rng: &mut impl Rng) -> f64 {
        self.rollout(rng, |_, _| {})
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Trajectory {
        let mut steps = Vec::with_capacity(self.mdp.horizon);
        let return_value = self.rollout(rng, |s, a| steps.push((s, a)));
        Trajectory { steps, return_value }
    }
}

pub fn sample_trajectory(mdp: &TabularMdp, params: &PolicyParams, rng: &mut impl Rng) -> Result<Trajectory> {
    Ok(Sampler::from_params(mdp, params)?.sample(rng))
}

/// Exact `V(pi)` by backward induction over the horizon.
pub fn exact_value_table(mdp: &TabularMdp, policy: &PolicyTable) -> Result<f64> {
    mdp.check_policy(policy)?;
    let values = backward_values(mdp, policy);
    Ok(mdp.initial_dist.iter().zip(&values[0]).map(|(p, v)| p * v).sum())
}

pub fn exact_value(mdp: &TabularMdp, params: &PolicyParams) -> Result<f64> {
    exact_value_table(mdp, &params.to_table())
}

/// `V_h(s)` for h = 0..H (0-based; index H is all zeros).
fn backward_values(mdp: &TabularMdp, policy: &PolicyTable) -> Vec<Vec<f64>> {
    let (ns, na, hz) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut values = vec![vec![0.0; ns]; hz + 1];
    for h in (0..hz).rev() {
        for s in 0..ns {
            let mut v = mdp.reward[s];
            if h + 1 < hz {
                let next = &values[h + 1];
                for a in 0..na {
                    let pa = policy.row(s)[a];
                    if pa == 0.0 {
                        continue;
                    }
                    v += pa * dot(mdp.transition_row(s, a), next);
                }
            }
            values[h][s] = v;
        }
    }
    values
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact `grad_theta V(pi_theta)` for the tabular softmax policy, from forward
/// state occupancies and backward continuation values.
pub fn exact_value_gradient(mdp: &TabularMdp, params: &PolicyParams) -> Result<Vec<f64>> {
    let policy = params.to_table();
    mdp.check_policy(&policy)?;
    let (ns, na, hz) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let values = backward_values(mdp, &policy);
    let mut grad = vec![0.0; mdp.dim()];
    let mut occupancy = mdp.initial_dist.clone();
    let mut cont = vec![0.0; na];
    // The action at the last step has no effect on the return.
    for h in 0..hz.saturating_sub(1) {
        let next_v = &values[h + 1];
        let mut next_occ = vec![0.0; ns];
        for s in 0..ns {
            let d = occupancy[s];
            if d == 0.0 {
                continue;
            }
            let pi = policy.row(s);
            for a in 0..na {
                cont[a] = dot(mdp.transition_row(s, a), next_v);
            }
            let baseline = dot(pi, &cont);
            for a in 0..na {
                grad[s * na + a] += d * pi[a] * (cont[a] - baseline);
                let w = d * pi[a];
                if w != 0.0 {
                    for (n, p) in next_occ.iter_mut().zip(mdp.transition_row(s, a)) {
                        *n += w * p;
                    }
                }
            }
        }
        occupancy = next_occ;
    }
    Ok(grad)
}

/// Sample mean and standard error of `n` independent returns.
pub fn monte_carlo_value(
    mdp: &TabularMdp,
    params: &PolicyParams,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    monte_carlo_value_table(mdp, &params.to_table(), n, rng)
}

pub fn monte_carlo_value_table(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    n: usize,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("monte carlo needs n >= 2, got {n}")));
    }
    let sampler = Sampler::new(mdp, policy)?;
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        let x = sampler.sample_return(rng);
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// Optimal finite-horizon value over all (possibly non-stationary) policies.
pub fn optimal_value(mdp: &TabularMdp) -> f64 {
    let (ns, na, hz) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut next = vec![0.0; ns];
    for h in (0..hz).rev() {
        let cur: Vec<f64> = (0..ns)
            .map(|s| {
                let best = if h + 1 < hz {
                    (0..na).map(|a| dot(mdp.transition_row(s, a), &next)).fold(f64::NEG_INFINITY, f64::max)
                } else {
                    0.0
                };
                mdp.reward[s] + best
            })
            .collect();
        next = cur;
    }
    dot(&mdp.initial_dist, &next)
}

/// On-disk form of a [`TabularMdp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub dimensions: Dimensions,
    pub horizon: usize,
    pub reward: Vec<f64>,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_distribution: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Dimensions {
    pub states: usize,
    pub actions: usize,
}

impl From<&TabularMdp> for MdpFile {
    fn from(m: &TabularMdp) -> Self {
        let transition = (0..m.num_states)
            .map(|s| (0..m.num_actions).map(|a| m.transition_row(s, a).to_vec()).collect())
            .collect();
        MdpFile {
            dimensions: Dimensions { states: m.num_states, actions: m.num_actions },
            horizon: m.horizon,
            reward: m.reward.clone(),
            transition,
            initial_distribution: m.initial_dist.clone(),
            generator_seed: m.generator_seed,
        }
    }
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let (ns, na) = (f.dimensions.states, f.dimensions.actions);
        if f.transition.len() != ns || f.transition.iter().any(|r| r.len() != na) {
            return Err(Error::InvalidModel("transition tensor shape does not match dimensions".into()));
        }
        let flat: Vec<f64> = f.transition.into_iter().flatten().flatten().collect();
        let mdp = TabularMdp::new(ns, na, f.horizon, flat, f.reward, f.initial_distribution)?;
        Ok(match f.generator_seed {
            Some(seed) => mdp.with_generator_seed(seed),
            None => mdp,
        })
    }
}

impl TabularMdp {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MdpFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<MdpFile>(text)?.try_into()
    }
}
