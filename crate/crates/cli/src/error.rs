use std::path::Path;

use conelab_core::Error;

/// Failures that map onto the exit-code contract: usage and configuration
/// problems (including malformed specs rejected by the core) exit with 2,
/// everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: line {line}, column {column}: {message}")]
    Config { path: String, line: usize, column: usize, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] conelab_core::Error),
}

impl CliError {
    pub fn config(path: &Path, err: &serde_json::Error) -> Self {
        CliError::Config {
            path: path.display().to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Core(
                Error::InvalidCone(_)
                | Error::DegenerateCone(_)
                | Error::InvalidArgument(_)
                | Error::NonPositiveScale(_)
                | Error::DensitySpec(_)
                | Error::Unsupported(_),
            ) => 2,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}
