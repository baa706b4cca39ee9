//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A matrix that should have full column rank collapsed during a polar
    /// retraction (signals a degenerate reduction during training).
    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),
    /// Cholesky factorization failed (input not positive definite).
    #[error("factorization failed: {0}")]
    Factorization(String),
    /// NaN or Inf appeared in network parameters during training.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    /// All kernel weights underflowed to zero around an anchor point.
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),
    /// A dataset file failed to parse. Lines and columns are 1-based.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    /// A prediction failed for a specific test point.
    #[error("prediction failed for test point {index}: {message}")]
    Prediction { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
