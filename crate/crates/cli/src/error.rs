use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing input files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInputs(Vec<PathBuf>),

    #[error("malformed input {path}: {msg}")]
    Input { path: PathBuf, msg: String },

    #[error(transparent)]
    Numerical(#[from] ritzlab::Error),

    #[error("{0}")]
    Validation(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 usage and input problems, 2 numerical failure, 3 violated bound.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::MissingInputs(_) | CliError::Input { .. } => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}
