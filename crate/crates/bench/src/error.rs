//! Harness error type with process exit-code mapping.

use thiserror::Error;
use viewprune_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad config file or bad CLI arguments. Exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A component broke an internal contract. Exit code 3.
    #[error("contract violation: {0}")]
    Contract(String),

    /// IO failures and everything else. Exit code 1.
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Contract(_) => 3,
            HarnessError::Other(_) => 1,
        }
    }
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ContractViolation(msg) => HarnessError::Contract(msg),
            CoreError::InvalidConfig(msg) => HarnessError::Config(msg),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Other(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
