use std::path::PathBuf;

use thiserror::Error;

use crate::manifest::Stage;

#[derive(Debug, Error)]
pub enum ServiceError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] comment_topics_core::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: comment_topics_core::Error,
    },

    #[error("run {0:?} not found")]
    RunNotFound(String),

    #[error("{0}")]
    NotFound(String),

    /// Field-level validation failures.
    #[error("invalid request: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("{0}")]
    Conflict(String),

    /// The run exists but lacks what the request needs.
    #[error("{0}")]
    NotReady(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 usage, 2 data error, 3 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Usage(_) | ServiceError::Core(comment_topics_core::Error::Config(_)) => 1,
            ServiceError::Stage { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
