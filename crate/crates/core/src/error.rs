use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside kernel domain: {0}")]
    Domain(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("no closed-form integral identity for {0} (enable the quadrature fallback)")]
    UnsupportedIdentity(String),

    #[error("matrix not positive definite after jitter ladder (min eigenvalue estimate {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("hyperparameter schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("posterior covariance inconsistent: variance {variance:e} for output {output}")]
    InternalConsistency { output: usize, variance: f64 },

    #[error("solver failed after {iterations} iterations (final residual {residual:e})")]
    SolverFailed {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("optimization failed: every restart was rejected")]
    OptimizationFailed,

    #[error("accuracy target {target:e} not met (best estimate {estimate}, change {achieved:e})")]
    AccuracyNotMet {
        target: f64,
        achieved: f64,
        estimate: f64,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),
}

impl Error {
    /// Whether the error comes from bad input rather than a numerical
    /// failure on valid input.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::Domain(_)
                | Error::UnsupportedIdentity(_)
                | Error::SchemaMismatch(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
