use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("state error: {0}")]
    State(String),

    #[error("training diverged at iteration {iter}: {detail}")]
    Training { iter: usize, detail: String },

    #[error("stream exhausted after {received} frames (needed {needed})")]
    StreamExhausted { received: usize, needed: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    UnsupportedVersion { path: PathBuf, found: String, expected: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("sink failure: {0}")]
    Sink(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
