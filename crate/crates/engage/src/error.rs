use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },

    #[error("latency budget exceeded: {0}")]
    BudgetExceeded(String),
}

impl EngageError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EngageError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        EngageError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngageError::Config(_) => 2,
            EngageError::BudgetExceeded(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, EngageError>;
