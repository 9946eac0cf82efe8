//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by graph construction, training, and IO.
#[derive(Debug, Error)]
pub enum Error {
    /// A structural precondition on graph data was violated.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// A configuration value is missing or out of range.
    #[error("config error: {0}")]
    Config(String),

    /// A data file could not be parsed.
    #[error("data error in {path} (line {line}): {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    /// A numeric computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Training diverged; the partial loss history is preserved.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        history: Vec<crate::train::LossRecord>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
