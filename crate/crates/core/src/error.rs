use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the parsing, surprisal, and regression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-projective sentence: {0}")]
    NonProjective(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("search error: {0}")]
    Search(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
