//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the dequantization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(String),

    #[error("empty signal")]
    EmptySignal,

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("gabor configuration: {0}")]
    GaborConfig(String),

    #[error("instantaneous-frequency calibration failed: {0}")]
    Calibration(String),

    #[error("solver diverged: non-finite value at iteration {iter}")]
    NonFiniteIterate { iter: usize },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
