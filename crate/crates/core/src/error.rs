use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("filter aborted at t={index}: {message}")]
    FilterAbort { index: usize, message: String },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("degenerate evaluation input: {0}")]
    Degenerate(String),

    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
