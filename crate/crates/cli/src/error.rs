use std::io;
use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Dataset(String),
    #[error(transparent)]
    Core(#[from] dbess::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Stable identifier for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config(_) => "invalid_config",
            CliError::Dataset(_) => "dataset",
            CliError::Core(dbess::Error::InvalidConfig(_) | dbess::Error::IndivisibleN { .. }) => "invalid_config",
            CliError::Core(_) => "numerical",
        }
    }
}
