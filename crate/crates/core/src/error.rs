use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed file contents.
    #[error("{0}")]
    Decode(String),
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// The input cannot be processed meaningfully (e.g. a mask covering the
    /// whole plane, or clustering that collapses to one group).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
