//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Data failed a structural invariant (manifest row, availability grid, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// A manifest or config file could not be parsed.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Checkpoint on disk was written by an incompatible version.
    #[error("checkpoint format version {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },

    /// A loss became NaN or infinite during optimization.
    #[error("non-finite loss: {0}")]
    NonFinite(String),

    /// Segmentation found no foreground pixels.
    #[error("empty foreground: every component touches an image corner")]
    EmptyForeground,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("png error on {path}: {msg}")]
    Png { path: PathBuf, msg: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable one-word category used by the CLI for machine-parsable failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Validation(_) => "validation",
            Error::Parse { .. } => "parse",
            Error::FormatVersion { .. } => "format-version",
            Error::NonFinite(_) => "non-finite",
            Error::EmptyForeground => "empty-foreground",
            Error::Io { .. } => "io",
            Error::Png { .. } => "png",
        }
    }
}
