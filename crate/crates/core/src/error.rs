use thiserror::Error;

/// Errors raised by the numerical routines and the batch front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e}; {detail})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        detail: String,
    },

    #[error("infeasible effective field: {0}")]
    InfeasibleField(String),

    #[error("divergent quantity: {0}")]
    Divergence(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("tail bound {bound:e} exceeds tolerance {tolerance:e}")]
    TailBound { bound: f64, tolerance: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
