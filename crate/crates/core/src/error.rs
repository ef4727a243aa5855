use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("no urban cluster exists")]
    NoUrbanCluster,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Diverged(String),

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 = validation failure, 3 = I/O failure, 4 = configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::GridMismatch(_) | Error::NoUrbanCluster => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Model(_) => 3,
            Error::Config(_) | Error::InvalidArgument(_) => 4,
            Error::IndexOutOfBounds { .. } | Error::Diverged(_) => 2,
        }
    }
}
