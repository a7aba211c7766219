use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (ranges, shapes, mismatched rates, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid input data (empty signals, out-of-range lengths, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Misuse of an API contract (e.g. a stale backward tape).
    #[error("usage error: {0}")]
    Usage(String),

    /// A file did not parse as the expected format.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// A checkpoint failed to load.
    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    /// Signal too short for the requested analysis.
    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
