use thiserror::Error;

use mlti::error::ErrorClass;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mlti::Error),

    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// One or more verification suites failed.
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    /// 0 ok, 1 input error, 2 infeasible, 3 internal invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Input => 1,
                ErrorClass::Infeasible => 2,
                ErrorClass::Internal => 3,
            },
            CliError::Input(_) | CliError::Io { .. } | CliError::Json { .. } => 1,
            CliError::Csv(_) => 1,
            CliError::Verify(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
