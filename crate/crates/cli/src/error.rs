use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(#[from] dephasing::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Read { .. } | CliError::Write { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
