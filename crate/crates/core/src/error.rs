use thiserror::Error;

use crate::scalar_channel::DualPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapError {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("cannot parse prior descriptor `{0}`")]
    PriorDescriptor(String),

    #[error("tilted weights degenerate at lambda={lambda}, gamma={gamma}")]
    DegenerateTilt { lambda: f64, gamma: f64 },

    #[error("moment pair (m={m}, s={s}) is not interior to the moment space")]
    NotInDomain { m: f64, s: f64 },

    #[error("dual solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        best: DualPair,
        residual: f64,
        iterations: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change of the fixed-point residual on the gamma grid")]
    NoBracket,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("enumeration guard exceeded: {configurations} configurations (limit {limit})")]
    GuardExceeded { configurations: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TapError>;

impl From<std::io::Error> for TapError {
    fn from(err: std::io::Error) -> Self {
        TapError::Io(err.to_string())
    }
}
