use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("sample `{0}` has a zero-norm feature vector")]
    ZeroNorm(String),

    #[error("sample `{0}` has a non-finite feature value")]
    NonFinite(String),

    #[error("temporal affinity requires timestamps for every gallery sample")]
    MissingTimestamps,

    #[error("unsupported feature encoding `{0}` (expected `f32le`)")]
    Encoding(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| DataError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| DataError::Json { path, source }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
