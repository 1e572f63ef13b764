use std::path::PathBuf;

use lqgraphon_core::Error as CoreError;

/// CLI failures, each mapped to a stable process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Input(String),
    #[error("regression: {0}")]
    Regression(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    /// 2 for bad input, 3 for a failed regression gate, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Input(_) => 2,
            CliError::Regression(_) => 3,
            CliError::Core(e) => match e {
                CoreError::NegativeGap { .. } => 3,
                CoreError::RiccatiBlowUp { .. } | CoreError::NonFinite { .. } => 1,
                _ => 2,
            },
            CliError::Io { .. } | CliError::Csv(_) => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
