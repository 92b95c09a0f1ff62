use std::path::PathBuf;

use thiserror::Error;
use wdistortion::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed config {path}: {source}")]
    Config {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Mismatch(String),

    /// A check ran to completion and reported failure.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 0 ok, 1 validation failure, 2 I/O or format, 3 input inconsistency.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                CoreError::Io(_)
                | CoreError::Image(_)
                | CoreError::BadMagic
                | CoreError::UnsupportedVersion(_)
                | CoreError::Truncated => 2,
                CoreError::DimensionMismatch(_) | CoreError::ScaleDimsMismatch(_) | CoreError::OutOfBounds { .. } => 3,
                CoreError::InvalidArgument(_) | CoreError::Degenerate(_) | CoreError::NonFinite(_) => 1,
            },
            CliError::Read { .. } | CliError::Write { .. } | CliError::Config { .. } => 2,
            CliError::Mismatch(_) => 3,
            CliError::Usage(_) | CliError::Failed(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
