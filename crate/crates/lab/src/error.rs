use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Invalid command-line or manifest configuration.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] blowup_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed field file: {0}")]
    Field(String),

    /// One or more acceptance checks failed.
    #[error("criteria failed: {0}")]
    Criteria(String),
}

impl LabError {
    pub fn usage(msg: impl Into<String>) -> Self {
        LabError::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for usage and validation problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Core(blowup_core::Error::Domain(_)) => 2,
            LabError::Core(blowup_core::Error::DimensionMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
