use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, BrisqueError>;

#[derive(Debug, Error)]
pub enum BrisqueError {
    /// Two-scale analysis needs a meaningful half-resolution pass, so inputs
    /// below 16x16 are rejected outright.
    #[error("image must be at least 16x16 pixels, got {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },

    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSizeMismatch { got: usize, expected: usize },

    #[error("distribution fit needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("degenerate sample distribution: {0}")]
    DegenerateDistribution(&'static str),

    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },

    #[error("{file} line {line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },

    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}
