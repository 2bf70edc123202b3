//! Moment-matching fits of (asymmetric) generalized Gaussian distributions.
//!
//! Both fits invert the generalized-Gaussian moment ratio
//! `r(shape) = Γ(2/shape)² / (Γ(1/shape) · Γ(3/shape))` through a dense
//! lookup over shape ∈ [0.2, 10] at step 0.001. The symmetric (GGD) fit
//! is the special case where the left and right deviations coincide.

use std::sync::OnceLock;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{BrisqueError, Result};

/// Minimum sample count accepted by the fits.
pub const MIN_SAMPLES: usize = 100;

const SHAPE_LO: f64 = 0.2;
const SHAPE_HI: f64 = 10.0;
const SHAPE_STEP: f64 = 0.001;

/// Parameters of an asymmetric generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdParams {
    /// Shape (tail weight); 2 is Gaussian, 1 is Laplacian.
    pub shape: f64,
    /// Deviation of the negative half.
    pub sigma_left: f64,
    /// Deviation of the positive half.
    pub sigma_right: f64,
    /// Mean induced by the left/right asymmetry.
    pub mean_offset: f64,
}

/// Parameters of a symmetric generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdParams {
    /// Shape (tail weight); 2 is Gaussian, 1 is Laplacian.
    pub shape: f64,
    /// Second moment of the samples.
    pub variance: f64,
}

/// The ratio table, indexed in lockstep with `shape_at`.
fn ratio_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let len = ((SHAPE_HI - SHAPE_LO) / SHAPE_STEP).round() as usize + 1;
        (0..len)
            .map(|i| {
                let g = shape_at(i);
                (2.0 * ln_gamma(2.0 / g) - ln_gamma(1.0 / g) - ln_gamma(3.0 / g)).exp()
            })
            .collect()
    })
}

#[inline]
fn shape_at(index: usize) -> f64 {
    SHAPE_LO + index as f64 * SHAPE_STEP
}

/// Shape whose tabulated moment ratio is closest to `target`.
fn invert_ratio(target: f64) -> f64 {
    let table = ratio_table();
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, &r) in table.iter().enumerate() {
        let err = (r - target).abs();
        if err < best_err {
            best_err = err;
            best = i;
        }
    }
    shape_at(best)
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(BrisqueError::TooFewSamples { min: MIN_SAMPLES, got: samples.len() });
    }
    if samples.iter().all(|&v| v == 0.0) {
        return Err(BrisqueError::DegenerateDistribution("all samples are zero"));
    }
    Ok(())
}

/// Fit an asymmetric generalized Gaussian by moment matching.
///
/// Matches the asymmetry-normalized ratio
/// `r̂ · (γ̂³ + 1)(γ̂ + 1) / (γ̂² + 1)²` with `γ̂ = σ_left / σ_right`
/// and `r̂ = E[|x|]² / E[x²]` against the tabulated ratio function.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdParams> {
    check_samples(samples)?;

    let n = samples.len() as f64;
    let (mut neg_sq, mut neg_n) = (0.0, 0usize);
    let (mut pos_sq, mut pos_n) = (0.0, 0usize);
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &v in samples {
        abs_sum += v.abs();
        sq_sum += v * v;
        if v < 0.0 {
            neg_sq += v * v;
            neg_n += 1;
        } else if v > 0.0 {
            pos_sq += v * v;
            pos_n += 1;
        }
    }
    if neg_n == 0 || pos_n == 0 {
        return Err(BrisqueError::DegenerateDistribution(
            "samples lie entirely on one side of zero",
        ));
    }

    let sigma_left = (neg_sq / neg_n as f64).sqrt();
    let sigma_right = (pos_sq / pos_n as f64).sqrt();
    let gamma_hat = sigma_left / sigma_right;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat * gamma_hat + 1.0).powi(2);

    let shape = invert_ratio(r_norm);
    let ratio = gamma(2.0 / shape) / gamma(1.0 / shape);
    let mean_offset =
        (sigma_right - sigma_left) * ratio * (gamma(1.0 / shape) / gamma(3.0 / shape)).sqrt();

    Ok(AggdParams { shape, sigma_left, sigma_right, mean_offset })
}

/// Fit a symmetric generalized Gaussian by moment matching.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdParams> {
    check_samples(samples)?;

    let n = samples.len() as f64;
    let abs_mean = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let variance = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let shape = invert_ratio(abs_mean * abs_mean / variance);

    Ok(GgdParams { shape, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    /// Generalized Gaussian sampler built on the fact that |X|^shape is
    /// Gamma(1/shape, 1)-distributed — independent of the moment fit.
    fn ggd_samples(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma_dist = Gamma::new(1.0 / shape, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let magnitude = gamma_dist.sample(&mut rng).powf(1.0 / shape) * scale;
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect()
    }

    #[test]
    fn ratio_table_is_monotone_increasing() {
        let table = ratio_table();
        assert_eq!(table.len(), 9801);
        for w in table.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Gaussian ratio E|x|²/E[x²] = 2/π.
        let gaussian = table[((2.0 - SHAPE_LO) / SHAPE_STEP).round() as usize];
        assert!((gaussian - std::f64::consts::FRAC_2_PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_samples_recover_shape_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();

        let aggd = fit_aggd(&samples).unwrap();
        assert!((aggd.shape - 2.0).abs() / 2.0 < 0.02, "shape {}", aggd.shape);
        assert!((aggd.sigma_left / aggd.sigma_right - 1.0).abs() < 0.02);
        assert!(aggd.mean_offset.abs() < 0.01);

        let ggd = fit_ggd(&samples).unwrap();
        assert!((ggd.shape - 2.0).abs() / 2.0 < 0.02, "shape {}", ggd.shape);
        assert!((ggd.variance - 1.0).abs() < 0.01);
    }

    #[test]
    fn laplacian_samples_recover_shape_one() {
        // Inverse-CDF Laplacian sampler, independent of the fit's moments.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let ggd = fit_ggd(&samples).unwrap();
        assert!((ggd.shape - 1.0).abs() < 0.03, "shape {}", ggd.shape);
    }

    #[test]
    fn fit_error_shrinks_as_samples_grow() {
        let mut errs = Vec::new();
        for n in [10_000, 100_000, 1_000_000] {
            let samples = ggd_samples(1.5, 1.0, n, 23);
            let fit = fit_aggd(&samples).unwrap();
            errs.push((fit.shape - 1.5).abs() / 1.5);
        }
        assert!(errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < errs[1], "{errs:?}");
        assert!(errs[2] < 0.02, "{errs:?}");
    }

    #[test]
    fn asymmetric_samples_recover_side_deviations() {
        // Scale the negative half of a seeded GGD stream by 2.
        let samples: Vec<f64> = ggd_samples(2.0, 1.0, 500_000, 41)
            .into_iter()
            .map(|v| if v < 0.0 { 2.0 * v } else { v })
            .collect();
        let fit = fit_aggd(&samples).unwrap();
        assert!((fit.sigma_left / fit.sigma_right - 2.0).abs() < 0.05);
        assert!(fit.mean_offset < 0.0, "left-heavy data should pull the mean negative");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            fit_aggd(&[0.5; 10]),
            Err(BrisqueError::TooFewSamples { min: 100, got: 10 })
        ));
        assert!(matches!(
            fit_aggd(&vec![0.0; 200]),
            Err(BrisqueError::DegenerateDistribution(_))
        ));
        let one_sided: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert!(matches!(
            fit_aggd(&one_sided),
            Err(BrisqueError::DegenerateDistribution(_))
        ));
    }
}
