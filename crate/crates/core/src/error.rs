use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state index {index} out of range for {num_states} states")]
    StateOutOfRange { index: usize, num_states: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("link function `{0}` is not invertible at this probability")]
    NonInvertible(String),

    #[error("empty trajectory batch")]
    EmptyBatch,

    #[error("objective returned a non-finite value ({0})")]
    NonFinite(f64),

    #[error("divergence at iteration {iteration}: parameter norm {norm:.3e} exceeds guard")]
    Divergence { iteration: usize, norm: f64 },

    #[error("no sign crossing in [0, 1]: expected deviation is {at_zero:.6} at 0 and {at_one:.6} at 1")]
    NoCrossing { at_zero: f64, at_one: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
