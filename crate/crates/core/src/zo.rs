//! Black-box ascent from function-value or comparison queries.
//!
//! Three direction estimators share one Gaussian perturbation scheme:
//! two-point ZO-SGD, element-wise ZO-signSGD, and the scalar-sign estimator
//! `sign[f(theta + mu v) - f(theta)] * v`, which needs only a comparison
//! oracle and is what the preference-driven policy optimizer builds on.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Parameter-norm bound past which an ascent run is aborted.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Objective `f: R^d -> R` to be maximized.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    /// A possibly noisy evaluation; the default is noise-free.
    fn sample_value(&self, theta: &[f64], _rng: &mut Stream) -> f64 {
        self.value(theta)
    }

    /// Exact gradient, when available to test code and trace diagnostics.
    fn gradient(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Outcome of comparing a perturbed point against the current one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Tie,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Tie
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Tie => 0.0,
            Sign::Positive => 1.0,
        }
    }
}

/// Answers "is `perturbed` better than `current`?" as a sign.
pub trait SignOracle {
    fn compare(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<Sign>;
}

/// Sign of the true objective difference.
pub struct ExactSign<'a, O: ?Sized> {
    pub objective: &'a O,
    pub queries: usize,
}

impl<'a, O: Objective + ?Sized> ExactSign<'a, O> {
    pub fn new(objective: &'a O) -> Self {
        Self { objective, queries: 0 }
    }
}

impl<O: Objective + ?Sized> SignOracle for ExactSign<'_, O> {
    fn compare(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<Sign> {
        self.queries += 1;
        let hi = self.objective.sample_value(perturbed, rng);
        let lo = self.objective.sample_value(current, rng);
        finite(hi)?;
        finite(lo)?;
        Ok(Sign::of(hi - lo))
    }
}

impl<F> SignOracle for F
where
    F: FnMut(&[f64], &[f64], &mut Stream) -> Sign,
{
    fn compare(&mut self, perturbed: &[f64], current: &[f64], rng: &mut Stream) -> Result<Sign> {
        Ok(self(perturbed, current, rng))
    }
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(x))
    }
}

pub fn gaussian_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn axpy(theta: &[f64], scale: f64, dir: &[f64]) -> Vec<f64> {
    theta.iter().zip(dir).map(|(t, v)| t + scale * v).collect()
}

/// Two-point estimate `(f(theta + mu v) - f(theta)) / mu * v`.
pub fn zo_sgd_direction<O: Objective + ?Sized>(
    objective: &O,
    theta: &[f64],
    mu: f64,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let v = gaussian_vector(theta.len(), rng);
    let hi = finite(objective.sample_value(&axpy(theta, mu, &v), rng))?;
    let lo = finite(objective.sample_value(theta, rng))?;
    let scale = (hi - lo) / mu;
    Ok(v.into_iter().map(|x| scale * x).collect())
}

/// `sign[compare(theta + mu v, theta)] * v`; a tie yields the zero vector.
/// Returns the direction together with the sign and the raw perturbation.
pub fn zspo_sign_direction_full(
    oracle: &mut (impl SignOracle + ?Sized),
    theta: &[f64],
    mu: f64,
    rng: &mut Stream,
) -> Result<(Vec<f64>, Sign, Vec<f64>)> {
    let v = gaussian_vector(theta.len(), rng);
    let sign = oracle.compare(&axpy(theta, mu, &v), theta, rng)?;
    let s = sign.as_f64();
    Ok((v.iter().map(|x| s * x).collect(), sign, v))
}

pub fn zspo_sign_direction(
    oracle: &mut (impl SignOracle + ?Sized),
    theta: &[f64],
    mu: f64,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    Ok(zspo_sign_direction_full(oracle, theta, mu, rng)?.0)
}

/// Element-wise sign of the mean of `q` two-point estimates.
pub fn zo_sign_sgd_direction<O: Objective + ?Sized>(
    objective: &O,
    theta: &[f64],
    mu: f64,
    q: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::InvalidArgument("zo-signSGD needs q >= 1 perturbations".into()));
    }
    let mut acc = vec![0.0; theta.len()];
    for _ in 0..q {
        for (a, g) in acc.iter_mut().zip(zo_sgd_direction(objective, theta, mu, rng)?) {
            *a += g;
        }
    }
    Ok(acc.into_iter().map(|x| Sign::of(x).as_f64()).collect())
}

/// Central differences, one coordinate at a time.
pub fn finite_difference_gradient<O: Objective + ?Sized>(objective: &O, theta: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            x[i] = theta[i] + step;
            let up = finite(objective.value(&x))?;
            x[i] = theta[i] - step;
            let dn = finite(objective.value(&x))?;
            x[i] = theta[i];
            Ok((up - dn) / (2.0 * step))
        })
        .collect()
}

/// Step-size schedule `alpha_t = lr_scale * sqrt(horizon / (d t))` and a fixed
/// perturbation radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lr_scale: f64,
    pub mu: f64,
    pub horizon: f64,
    pub iterations: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        // lr_scale = 0 is allowed: it freezes the iterate.
        if !(self.lr_scale >= 0.0 && self.lr_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr_scale must be >= 0, got {}", self.lr_scale)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!("perturbation mu must be > 0, got {}", self.mu)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("schedule horizon must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("need at least one iteration".into()));
        }
        Ok(())
    }

    /// `alpha_t` for 1-based `t`.
    pub fn learning_rate(&self, t: usize, dim: usize) -> f64 {
        self.lr_scale * (self.horizon / (dim as f64 * t as f64)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZoSgd,
    ZoSignSgd { q: usize },
    ZspoSign,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ZoSgd => "zo_sgd",
            Method::ZoSignSgd { .. } => "zo_sign_sgd",
            Method::ZspoSign => "zspo_sign",
        }
    }
}

/// Iterate `t` (1-based) of an ascent run.
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub t: usize,
    pub theta: Vec<f64>,
    pub f_value: f64,
    pub grad_norm: Option<f64>,
}

/// Raw record of a sign-driven ascent: `thetas[i]` is iterate `i + 1`, so
/// there are `T + 1` of them; `signs[i]` and `alphas[i]` produced step `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignAscent {
    pub thetas: Vec<Vec<f64>>,
    pub signs: Vec<Sign>,
    pub alphas: Vec<f64>,
    pub perturbation_norms: Vec<f64>,
}

fn guard(theta: &[f64], t: usize) -> Result<()> {
    let n = norm(theta);
    if !(n <= DIVERGENCE_NORM) {
        return Err(Error::Divergence { iteration: t, norm: n });
    }
    Ok(())
}

/// Sign-driven ascent `theta_{t+1} = theta_t + alpha_t sign_t v_t`.
///
/// Iteration `t` draws everything from the stream `rng::iteration_key(seed, t)`:
/// first the perturbation, then whatever the oracle consumes.
pub fn run_sign_ascent(
    oracle: &mut (impl SignOracle + ?Sized),
    schedule: &ScheduleConfig,
    theta0: &[f64],
    seed: u64,
) -> Result<SignAscent> {
    schedule.validate()?;
    let d = theta0.len();
    let mut thetas = Vec::with_capacity(schedule.iterations + 1);
    let mut signs = Vec::with_capacity(schedule.iterations);
    let mut alphas = Vec::with_capacity(schedule.iterations);
    let mut perturbation_norms = Vec::with_capacity(schedule.iterations);
    let mut theta = theta0.to_vec();
    for t in 1..=schedule.iterations {
        let mut r = rng::stream(rng::iteration_key(seed, t));
        let (dir, sign, v) = zspo_sign_direction_full(oracle, &theta, schedule.mu, &mut r)?;
        let alpha = schedule.learning_rate(t, d);
        let next = axpy(&theta, alpha, &dir);
        thetas.push(std::mem::replace(&mut theta, next));
        signs.push(sign);
        alphas.push(alpha);
        perturbation_norms.push(norm(&v));
        guard(&theta, t)?;
    }
    thetas.push(theta);
    Ok(SignAscent { thetas, signs, alphas, perturbation_norms })
}

/// Ascent on an objective with any of the three estimators. The zspo_sign
/// method uses the exact-sign oracle of `objective`.
pub fn run_ascent<O: Objective + ?Sized>(
    objective: &O,
    schedule: &ScheduleConfig,
    method: Method,
    theta0: &[f64],
    seed: u64,
) -> Result<Vec<TracePoint>> {
    schedule.validate()?;
    if theta0.len() != objective.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), actual: theta0.len() });
    }
    let point = |t: usize, theta: Vec<f64>| TracePoint {
        t,
        f_value: objective.value(&theta),
        grad_norm: objective.gradient(&theta).map(|g| norm(&g)),
        theta,
    };
    if method == Method::ZspoSign {
        let mut oracle = ExactSign::new(objective);
        let run = run_sign_ascent(&mut oracle, schedule, theta0, seed)?;
        return Ok(run.thetas.into_iter().enumerate().map(|(i, th)| point(i + 1, th)).collect());
    }
    let d = theta0.len();
    let mut out = Vec::with_capacity(schedule.iterations + 1);
    let mut theta = theta0.to_vec();
    for t in 1..=schedule.iterations {
        let mut r = rng::stream(rng::iteration_key(seed, t));
        let dir = match method {
            Method::ZoSgd => zo_sgd_direction(objective, &theta, schedule.mu, &mut r)?,
            Method::ZoSignSgd { q } => zo_sign_sgd_direction(objective, &theta, schedule.mu, q, &mut r)?,
            Method::ZspoSign => unreachable!(),
        };
        let next = axpy(&theta, schedule.learning_rate(t, d), &dir);
        out.push(point(t, std::mem::replace(&mut theta, next)));
        guard(&theta, t)?;
    }
    out.push(point(schedule.iterations + 1, theta));
    Ok(out)
}

/// `f(theta) = -sum_i w_i (theta_i - c_i)^2`, concave with smoothness `2 max w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveQuadratic {
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ConcaveQuadratic {
    pub fn isotropic(center: Vec<f64>) -> Self {
        let weights = vec![1.0; center.len()];
        Self { center, weights }
    }

    pub fn smoothness(&self) -> f64 {
        2.0 * self.weights.iter().cloned().fold(0.0, f64::max)
    }
}

impl Objective for ConcaveQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        -theta
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((t, c), w)| w * (t - c) * (t - c))
            .sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(
            theta
                .iter()
                .zip(&self.center)
                .zip(&self.weights)
                .map(|((t, c), w)| -2.0 * w * (t - c))
                .collect(),
        )
    }
}

/// Negated Huber loss around `center`: quadratic within `delta`, linear
/// outside. Smooth, concave, piecewise defined.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedPiecewise {
    pub center: Vec<f64>,
    pub delta: f64,
}

impl Objective for SmoothedPiecewise {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        -theta
            .iter()
            .zip(&self.center)
            .map(|(t, c)| {
                let r = (t - c).abs();
                if r <= self.delta {
                    0.5 * r * r
                } else {
                    self.delta * (r - 0.5 * self.delta)
                }
            })
            .sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(theta.iter().zip(&self.center).map(|(t, c)| -(t - c).clamp(-self.delta, self.delta)).collect())
    }
}

/// Objective from a closure, for ad-hoc use.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}
