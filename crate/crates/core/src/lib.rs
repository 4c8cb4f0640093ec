//! Zeroth-order sign policy optimization (ZSPO) from preference feedback
//! with an unknown link function, plus the comparison baselines, the
//! GridWorld testbed, distinguishability analysis, and an experiment harness.

pub mod baselines;
pub mod distinguish;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod mdp;
pub mod preference;
pub mod rng;
pub mod zo;
pub mod zspo;

pub use error::{Error, Result};
