//! No-reference image quality metric based on natural-scene statistics.
//!
//! An image is reduced to 36 features — generalized-Gaussian fits of its
//! mean-subtracted contrast-normalized coefficients and their neighboring
//! products, at two scales — and scored with a pretrained RBF support
//! vector regressor. Higher scores mean stronger visible impairment.
//!
//! ```no_run
//! use brisque::{extract_features, GrayImage, SvrModel};
//! use std::path::Path;
//!
//! let model = SvrModel::load_files(Path::new("model.txt"), Path::new("range.txt"))?;
//! let img = GrayImage::open("photo.png")?;
//! let score = model.score(&extract_features(&img)?);
//! println!("{:.3}", score.value);
//! # Ok::<(), brisque::BrisqueError>(())
//! ```
//!
//! All operations are pure functions of their inputs and safe to call
//! from many threads; a loaded [`SvrModel`] is immutable and shareable.

mod aggd;
mod error;
mod features;
mod gray;
mod mscn;
mod svr;

pub use aggd::{fit_aggd, fit_ggd, AggdParams, GgdParams, MIN_SAMPLES};
pub use error::{BrisqueError, Result};
pub use features::{extract_features, BrisqueFeatures, FEATURE_COUNT};
pub use gray::{GrayImage, MIN_DIMENSION};
pub use mscn::{compute_mscn, paired_products, MscnField, Orientation};
pub use svr::{load_model, BrisqueValue, SvrModel};
