//! Error type shared by the analysis library.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid CSV in {file}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("{file}:{row}: {message}")]
    Ingest {
        file: &'static str,
        row: u64,
        message: String,
    },

    #[error("subject {subject_id} has no reference (level-0) rating for image {image_id}")]
    MissingReference {
        subject_id: String,
        image_id: String,
    },

    #[error("{what} must be in [{lo}, {hi}], got {value}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("channel {channel} is degenerate: {reason}")]
    DegenerateChannel { channel: String, reason: String },

    #[error("no quality value for image {image_id} level {level}")]
    MissingBrisque { image_id: String, level: u8 },

    #[error("feature matrix is empty: every row had an absent channel")]
    EmptyMatrix,

    #[error("input has {got} dimensions, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("classifier training data contains a single class ({0})")]
    SingleClass(u8),

    #[error("solver did not converge in {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NoConvergence { iterations: u32, gradient_norm: f64 },

    #[error("no curve-fit start converged (best residual {best_residual:.6e})")]
    NoStartConverged { best_residual: f64 },

    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),

    #[error("{0} must not be constant")]
    ConstantInput(&'static str),

    #[error("could not draw a held-out split with varying targets in {attempts} attempts")]
    DegenerateSplits { attempts: u32 },

    #[error("need at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
