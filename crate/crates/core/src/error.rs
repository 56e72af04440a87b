//! Crate-wide error type.

/// Errors reported by model fitting, monitoring, diagnosis and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("matrix is not symmetric (max |C - C'| = {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {lambda_min:.3e})")]
    NotPsd { lambda_min: f64 },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
