use std::path::PathBuf;

use cncbf_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const VALIDATION: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Core(e) => match e {
                CoreError::CflViolation { .. }
                | CoreError::NonFiniteValue { .. }
                | CoreError::NanQuery
                | CoreError::Diverged { .. }
                | CoreError::NonFiniteRate(_) => exit::NUMERICAL,
                CoreError::InvalidConfig(_) | CoreError::InvalidGrid(_) | CoreError::DimensionMismatch { .. } => exit::USAGE,
                _ => exit::VALIDATION,
            },
            CliError::Validation(_) | CliError::Io { .. } | CliError::Format { .. } => exit::VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), reason: reason.into() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
