use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quantile level {0} must lie strictly inside (0, 1)")]
    QuantileOutOfRange(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("model kind mismatch: expected {expected}, got {got}")]
    ModelMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("malformed probability vector: {0}")]
    BadProbabilities(String),

    #[error(
        "quadrature did not converge: residual {residual:.3e} after {refinements} refinements"
    )]
    QuadratureNonConvergence { residual: f64, refinements: usize },

    #[error("grid support overflow: {escaped:.3e} of pushforward mass escapes [{lo}, {hi}]; extend support to at least [{need_lo}, {need_hi}]")]
    SupportOverflow {
        escaped: f64,
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error(
        "Bellman iteration did not converge within {max_iters} sweeps (residual {residual:.3e})"
    )]
    BellmanNonConvergence { max_iters: usize, residual: f64 },

    #[error("samples are non-comparable: {0}")]
    NonComparable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("trial failed at step {step}: {source}")]
    TrialFailed { step: u64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
