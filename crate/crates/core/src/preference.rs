//! Link functions, batched preference feedback, and majority-vote panels.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::mdp::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// Bradley-Terry: `1 / (1 + exp(-gamma x))`.
    Logistic,
    /// `clamp(gamma x + 1/2, 0, 1)`.
    #[serde(alias = "linear")]
    LinearClamped,
    /// 0-1 step with a fair coin at a tie.
    Step,
    /// Standard normal CDF at `gamma x`. Not used by the GridWorld experiments;
    /// included to exercise link-agnostic code paths.
    Probit,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Logistic => "logistic",
            LinkKind::LinearClamped => "linear",
            LinkKind::Step => "step",
            LinkKind::Probit => "probit",
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "bt" | "bradley-terry" => Ok(LinkKind::Logistic),
            "linear" | "linear_clamped" => Ok(LinkKind::LinearClamped),
            "step" => Ok(LinkKind::Step),
            "probit" => Ok(LinkKind::Probit),
            other => Err(Error::Config(format!("unknown link kind `{other}`"))),
        }
    }
}

/// A preference link `sigma`: monotone, `sigma(0) = 1/2`,
/// `sigma(-x) = 1 - sigma(x)`. `gamma` scales the reward difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkFunction {
    pub kind: LinkKind,
    pub gamma: f64,
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(gamma={})", self.kind.as_str(), self.gamma)
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

impl LinkFunction {
    pub fn new(kind: LinkKind, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("link gamma must be positive, got {gamma}")));
        }
        Ok(Self { kind, gamma })
    }

    pub fn logistic(gamma: f64) -> Self {
        Self { kind: LinkKind::Logistic, gamma }
    }

    pub fn linear(gamma: f64) -> Self {
        Self { kind: LinkKind::LinearClamped, gamma }
    }

    pub fn step() -> Self {
        Self { kind: LinkKind::Step, gamma: 1.0 }
    }

    pub fn probit(gamma: f64) -> Self {
        Self { kind: LinkKind::Probit, gamma }
    }

    /// `sigma(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        0.5 + self.deviation(x)
    }

    /// `sigma(x) - 1/2`, computed in an odd-symmetric form.
    pub fn deviation(&self, x: f64) -> f64 {
        let z = self.gamma * x;
        match self.kind {
            LinkKind::Logistic => 0.5 * (0.5 * z).tanh(),
            LinkKind::LinearClamped => z.clamp(-0.5, 0.5),
            LinkKind::Step => {
                if x > 0.0 {
                    0.5
                } else if x < 0.0 {
                    -0.5
                } else {
                    0.0
                }
            }
            LinkKind::Probit => 0.5 * libm::erf(z / SQRT_2),
        }
    }

    /// `sigma^{-1}(p)`, for links that are strictly increasing at `p`.
    pub fn inverse(&self, p: f64) -> Result<f64> {
        let bad = || Error::NonInvertible(self.to_string());
        if !(p > 0.0 && p < 1.0) {
            return Err(bad());
        }
        let z = match self.kind {
            LinkKind::Logistic => (p / (1.0 - p)).ln(),
            LinkKind::LinearClamped => p - 0.5,
            LinkKind::Step => return Err(bad()),
            LinkKind::Probit => {
                let mut z = if p < 0.5 {
                    -SQRT_2 * erf::erfc_inv(2.0 * p)
                } else {
                    SQRT_2 * erf::erfc_inv(2.0 * (1.0 - p))
                };
                // Newton polish against the forward CDF.
                for _ in 0..2 {
                    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    if pdf > 0.0 {
                        z -= (0.5 * libm::erfc(-z / SQRT_2) - p) / pdf;
                    }
                }
                z
            }
        };
        Ok(z / self.gamma)
    }

    pub fn is_invertible(&self) -> bool {
        self.kind != LinkKind::Step
    }

    /// Lipschitz constant of `sigma` (its largest slope), if finite.
    pub fn max_slope(&self) -> Option<f64> {
        match self.kind {
            LinkKind::Logistic => Some(self.gamma / 4.0),
            LinkKind::LinearClamped => Some(self.gamma),
            LinkKind::Step => None,
            LinkKind::Probit => Some(self.gamma / (2.0 * std::f64::consts::PI).sqrt()),
        }
    }
}

pub fn link_eval(link: &LinkFunction, x: f64) -> f64 {
    link.eval(x)
}

pub fn deviation(link: &LinkFunction, x: f64) -> f64 {
    link.deviation(x)
}

pub fn inverse_link(link: &LinkFunction, p: f64) -> Result<f64> {
    link.inverse(p)
}

/// A batch of trajectories and its mean return.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub trajectories: Vec<Trajectory>,
    pub mean_return: f64,
}

impl TrajectoryBatch {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mean_return =
            trajectories.iter().map(|t| t.return_value).sum::<f64>() / trajectories.len() as f64;
        Ok(Self { trajectories, mean_return })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn check_batches(a: &TrajectoryBatch, b: &TrajectoryBatch) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(a.mean_return - b.mean_return)
}

/// One panelist's bit for a mean-return gap `r(D1) - r(D0)`: 1 w.p. `sigma(gap)`.
pub fn panelist_bit(link: &LinkFunction, gap: f64, rng: &mut impl Rng) -> bool {
    let p = link.eval(gap);
    rng.random::<f64>() < p
}

/// Bit `o` with `P(o = 1) = sigma(mean(batch1) - mean(batch0))`.
pub fn sample_panelist_feedback(
    link: &LinkFunction,
    batch1: &TrajectoryBatch,
    batch0: &TrajectoryBatch,
    rng: &mut impl Rng,
) -> Result<bool> {
    let gap = check_batches(batch1, batch0)?;
    Ok(panelist_bit(link, gap, rng))
}

/// `K` panelists sharing one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    #[serde(flatten)]
    pub link: LinkFunction,
    #[serde(rename = "panelists")]
    pub size: usize,
}

impl Panel {
    pub fn new(link: LinkFunction, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("panel needs at least one panelist".into()));
        }
        Ok(Self { link, size })
    }

    /// Number of panelists (out of `K`) preferring batch 1 at this gap.
    /// Panelists are independent, so the count is Binomial(K, sigma(gap)).
    pub fn count_votes(&self, gap: f64, rng: &mut impl Rng) -> u64 {
        let p = self.link.eval(gap);
        if self.size == 1 {
            return (rng.random::<f64>() < p) as u64;
        }
        // p is always within [0, 1] here.
        Binomial::new(self.size as u64, p).expect("probability in [0, 1]").sample(rng)
    }

    /// Fraction of panelists preferring batch 1.
    pub fn vote_fraction(&self, gap: f64, rng: &mut impl Rng) -> f64 {
        self.count_votes(gap, rng) as f64 / self.size as f64
    }

    /// Majority vote: 1 iff strictly more than half the panel prefers batch 1;
    /// a tie is 0.
    pub fn majority(&self, gap: f64, rng: &mut impl Rng) -> bool {
        2 * self.count_votes(gap, rng) > self.size as u64
    }
}

pub fn panel_vote(
    panel: &Panel,
    batch1: &TrajectoryBatch,
    batch0: &TrajectoryBatch,
    rng: &mut impl Rng,
) -> Result<bool> {
    let gap = check_batches(batch1, batch0)?;
    Ok(panel.majority(gap, rng))
}

/// Majority rule on an explicit vote count, as used by [`Panel::majority`].
pub fn majority_of(votes_for: u64, panel_size: usize) -> bool {
    2 * votes_for > panel_size as u64
}
