use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Embed(#[from] EmbedError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{0} is undefined for this input")]
    Undefined(String),

    #[error("sampling precondition violated: {0}")]
    Sampling(String),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Failures raised by embedding backends.
#[derive(Debug, Error)]
pub enum EmbedError {
    /// The backend could not be reached. Callers may retry.
    #[error("embedding backend unavailable: {0}")]
    Unavailable(String),

    #[error("backend produced width {actual}, configuration expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("backend returned {actual} rows for {expected} sentences")]
    RowCount { expected: usize, actual: usize },

    #[error("invalid embedding input: {0}")]
    Input(String),

    #[error("backend produced a non-finite value in row {row}")]
    NonFinite { row: usize },
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Unavailable(_))
    }
}
