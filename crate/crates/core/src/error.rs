use thiserror::Error;

use crate::solvers::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("learning rate {name} must be positive and finite, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },

    #[error("payoff matrix is singular (condition estimate {cond:e})")]
    SingularPayoff { cond: f64 },

    /// Iterates left the representable range. `step` is the index of the
    /// first non-finite (or over-threshold) iterate.
    #[error("iterates diverged at step {step}")]
    Divergence {
        step: usize,
        last_x: Vec<f64>,
        last_y: Vec<f64>,
    },

    #[error("insufficient observations: need {needed} equations, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("operation requires a {expected} game, got {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("system is singular to working precision (cond {})", .diagnostics.cond)]
    SingularSystem { diagnostics: Box<Diagnostics> },

    #[error("a simplex game with k = 1 has nothing to reduce")]
    NothingToReduce,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Numerical failures (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularPayoff { .. } | Error::Divergence { .. } | Error::SingularSystem { .. }
        )
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonPositiveRate { .. } => "non_positive_rate",
            Error::SingularPayoff { .. } => "singular_payoff",
            Error::Divergence { .. } => "divergence",
            Error::InsufficientRecords { .. } => "insufficient_records",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::SingularSystem { .. } => "singular_system",
            Error::NothingToReduce => "nothing_to_reduce",
            Error::InvalidArgument(_) => "invalid_argument",
        }
    }
}
