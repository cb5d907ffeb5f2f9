use std::path::PathBuf;

use thiserror::Error;
use wlra_core::WlraError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt instance file: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Solver(#[from] WlraError),
}

impl CliError {
    /// 1 for bad flags or parameters, 2 for I/O or unreadable files, 3 for a
    /// structure mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Solver(_) => 1,
            CliError::Io { .. } | CliError::Corrupt(_) => 2,
            CliError::Mismatch(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
