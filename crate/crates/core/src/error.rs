use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("{path}:{line}: value out of range: {msg}")]
    Range { path: PathBuf, line: u64, msg: String },

    #[error("referential integrity: {0}")]
    Referential(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 3 for estimation failures, 2 for
    /// everything else (bad input, bad configuration, unreadable files).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Estimation(_) => 3,
            _ => 2,
        }
    }
}
