//! Error types shared across the harness.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Data that should have been structurally impossible: dimension
    /// mismatches, labels outside closed enumerations, duplicate grid cells,
    /// digest mismatches.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Replay-mode cache miss or a bundle entry that does not exist.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Network/HTTP failure that survived the retry budget. `attempts`
    /// carries one line per attempt for diagnosis.
    #[error("transport error calling {endpoint}: {message}")]
    Transport {
        endpoint: String,
        message: String,
        attempts: Vec<String>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: &str, source: Error) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(source),
        }
    }

    /// Process exit code contract: 0 success, 1 validation error,
    /// 2 stage failure, 3 integrity error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => match source.exit_code() {
                3 => 3,
                _ => 2,
            },
            Error::Integrity(_) => 3,
            Error::Config(_) | Error::Precondition(_) => 1,
            _ => 2,
        }
    }
}
