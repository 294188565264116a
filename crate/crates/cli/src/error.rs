use thiserror::Error;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {}", .0.name(), .0)]
    Numerical(#[from] onsager_core::Error),

    #[error("{name}: {detail}")]
    Check { name: &'static str, detail: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) | CliError::Check { .. } => 2,
            CliError::Validation(_) => 3,
        }
    }
}
