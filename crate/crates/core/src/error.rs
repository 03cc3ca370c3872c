use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DqsError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("score estimation failed: {0}")]
    Estimation(String),

    #[error("reverse diffusion diverged at tau = {tau}")]
    Sampling { tau: f64 },

    #[error("replay buffer holds {size} transitions, {requested} requested")]
    NotReady { size: usize, requested: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DqsError>;

impl DqsError {
    pub(crate) fn dim(expected: impl ToString, actual: impl ToString) -> Self {
        DqsError::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DqsError::Io {
            path: path.into(),
            source,
        }
    }
}
