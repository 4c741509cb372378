use shiftbreak::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("algorithm defect: {0}")]
    Defect(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Defect(_) => 3,
            CliError::Resource(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Classifies a core error raised while validating inputs.
    pub fn from_setup(err: CoreError) -> Self {
        match err {
            CoreError::TooLarge { .. } | CoreError::TooLargeForScan(_) => {
                CliError::Resource(err.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }

    /// Classifies a core error raised while an algorithm runs on valid inputs.
    pub fn from_run(err: CoreError) -> Self {
        match err {
            CoreError::TooLarge { .. }
            | CoreError::TooLargeForScan(_)
            | CoreError::Stalled { .. } => CliError::Resource(err.to_string()),
            CoreError::NotPrime(_)
            | CoreError::Overflow(_)
            | CoreError::NotDividing { .. }
            | CoreError::OutOfRange { .. }
            | CoreError::RangeViolation { .. } => CliError::Config(err.to_string()),
            other => CliError::Defect(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(err))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(err))
    }
}
