use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or inconsistent shapes passed to a library call.
    #[error("invalid input: {0}")]
    Input(String),

    /// Invalid training or command configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed file contents (bad magic, truncated payload, schema violation).
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// A delimited text cell or row could not be parsed.
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
