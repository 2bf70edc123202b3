//! Least-squares polynomial regression and Likert-scale quantization.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::regress::PolynomialBasis;

/// A polynomial model: one coefficient per basis monomial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    basis: PolynomialBasis,
    coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn new(basis: PolynomialBasis, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(CoreError::DimensionMismatch {
                expected: basis.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self { basis, coefficients })
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Evaluate the model at a raw (unexpanded) input vector.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let phi = self.basis.expand(x)?;
        Ok(phi.iter().zip(self.coefficients.iter()).map(|(p, c)| p * c).sum())
    }
}

/// Fit coefficients minimizing the residual sum of squares of
/// `y ≈ Σ_k a_k · monomial_k(x)`. Rank-deficient designs get the
/// minimum-norm least-squares solution.
pub fn fit_linear(basis: &PolynomialBasis, xs: &[Vec<f64>], ys: &[f64]) -> Result<LinearModel> {
    if xs.is_empty() {
        return Err(CoreError::Empty("training rows"));
    }
    if xs.len() != ys.len() {
        return Err(CoreError::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("target values"));
    }

    let n = xs.len();
    let p = basis.len();
    let mut design = DMatrix::zeros(n, p);
    for (i, x) in xs.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("feature values"));
        }
        let phi = basis.expand(x)?;
        for (j, value) in phi.into_iter().enumerate() {
            design[(i, j)] = value;
        }
    }

    let svd = design.svd(true, true);
    let largest = svd.singular_values.max();
    let cutoff = largest * n.max(p) as f64 * f64::EPSILON;
    let rhs = DVector::from_column_slice(ys);
    let solution = svd
        .solve(&rhs, cutoff)
        .map_err(|_| CoreError::NonFinite("least-squares solution"))?;

    let coefficients: Vec<f64> = solution.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(CoreError::NonFinite("least-squares solution"));
    }
    LinearModel::new(basis.clone(), coefficients)
}

/// Quantize one real prediction onto the 1–5 Likert scale: round half
/// away from zero, then clamp.
pub fn bound_scalar(value: f64) -> Result<u8> {
    if !value.is_finite() {
        return Err(CoreError::NonFinite("value to quantize"));
    }
    Ok(value.round().clamp(1.0, 5.0) as u8)
}

/// Quantize a list of real predictions onto the 1–5 Likert scale.
pub fn bound(values: &[f64]) -> Result<Vec<u8>> {
    values.iter().map(|&v| bound_scalar(v)).collect()
}
