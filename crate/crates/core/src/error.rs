use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
