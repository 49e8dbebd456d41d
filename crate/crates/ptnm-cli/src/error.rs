use ptnm::models::ModelError;
use ptnm::optim::OptimError;
use ptnm::proctensor::ProcessError;
use std::path::PathBuf;
use thiserror::Error;

/// Failures of a command, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("missing artifact {}: {source}", path.display())]
    Missing {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Missing { .. } => 4,
            CliError::Solver(_) => 5,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter(_) => CliError::Config(e.to_string()),
            other => CliError::Dimension(other.to_string()),
        }
    }
}

impl From<ProcessError> for CliError {
    fn from(e: ProcessError) -> Self {
        CliError::Dimension(e.to_string())
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::AllRestartsFailed { .. } | OptimError::NonConvergent { .. } => {
                CliError::Solver(e.to_string())
            }
            OptimError::InvalidConfig(_) | OptimError::BadGrid => CliError::Config(e.to_string()),
            other => CliError::Dimension(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
