//! Core analysis library: experiment session model, opinion scores,
//! EEG band features, regression engines, and the two-stage prediction
//! pipeline.

mod error;

pub mod eeg;
pub mod pipeline;
pub mod regress;
pub mod scores;
pub mod session;
pub mod synth;

pub use error::{CoreError, Result};
