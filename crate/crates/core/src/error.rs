use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GdrfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GdrfError {
    /// A caller broke an operation's precondition (bad index, shape mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data rejected. Every offending line is listed.
    #[error("ingestion failed:\n{}", .0.join("\n"))]
    Ingestion(Vec<String>),

    /// Invalid configuration. All problems are reported at once.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl GdrfError {
    pub fn contract(msg: impl Into<String>) -> Self {
        GdrfError::Contract(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        GdrfError::Numerical(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        GdrfError::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GdrfError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GdrfError::Config(_) | GdrfError::Contract(_) => 2,
            GdrfError::Ingestion(_) => 3,
            GdrfError::Numerical(_) => 4,
            GdrfError::Io { .. } | GdrfError::Format { .. } => 1,
        }
    }
}
