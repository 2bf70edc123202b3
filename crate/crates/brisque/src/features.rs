//! The 36-element natural-scene-statistics feature vector.

use crate::aggd::{fit_aggd, fit_ggd};
use crate::error::{BrisqueError, Result};
use crate::gray::GrayImage;
use crate::mscn::{compute_mscn, paired_products, Orientation};

/// Number of features produced per image.
pub const FEATURE_COUNT: usize = 36;

/// Feature vector describing the natural-scene statistics of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueFeatures {
    values: [f64; FEATURE_COUNT],
}

impl BrisqueFeatures {
    /// Wrap a raw 36-element vector (e.g. one read back from a CSV dump).
    pub fn from_values(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(BrisqueError::NonFiniteFeature { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }
}

/// The 18 per-scale features: symmetric fit of the coefficient field,
/// then four asymmetric fits of its neighboring products.
fn scale_features(img: &GrayImage, out: &mut Vec<f64>) -> Result<()> {
    let field = compute_mscn(img);

    let ggd = fit_ggd(field.values())?;
    out.push(ggd.shape);
    out.push(ggd.variance);

    for orientation in Orientation::ALL {
        let products = paired_products(&field, orientation);
        let fit = fit_aggd(&products)?;
        out.push(fit.shape);
        out.push(fit.mean_offset);
        out.push(fit.sigma_left * fit.sigma_left);
        out.push(fit.sigma_right * fit.sigma_right);
    }
    Ok(())
}

/// Extract the full feature vector: 18 features at native resolution and
/// 18 more after halving the image by 2×2 block averaging.
pub fn extract_features(img: &GrayImage) -> Result<BrisqueFeatures> {
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    scale_features(img, &mut values)?;
    scale_features(&img.downsample_half(), &mut values)?;

    let values: [f64; FEATURE_COUNT] = values
        .try_into()
        .expect("two scales of 18 features each");
    BrisqueFeatures::from_values(values)
}
