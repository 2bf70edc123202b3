//! Multinomial logistic classification over a polynomial basis.
//!
//! Always five classes (the 1–5 Likert ratings). The fit minimizes the
//! L2-regularized multinomial negative log-likelihood
//!
//! ```text
//! J(θ) = Σ_i −log softmax_{y_i}(z(x_i)) + (λ/2)·‖θ‖²
//! ```
//!
//! where class scores are `z_k = w_k·φ(x) + b_k`. The penalty covers
//! every parameter, intercepts included, which makes the objective
//! strictly convex and the fitted model unique. Solved by Newton–CG
//! (conjugate-gradient Newton steps with Armijo backtracking) to a
//! gradient norm of 1e-6.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::regress::PolynomialBasis;

/// Ratings are always classified into the five Likert classes.
pub const CLASS_COUNT: usize = 5;

/// Default L2 strength used when a caller does not choose one.
pub const DEFAULT_LAMBDA: f64 = 1.0;

const GRADIENT_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: u32 = 200;
const ARMIJO_C1: f64 = 1e-4;
/// Rounding-noise allowance in the sufficient-decrease test, in units of
/// ε·|objective|. Near the optimum a full Newton step shrinks the
/// objective by less than one ulp; without this slack the line search
/// rejects it and stalls on zero-progress micro-steps.
const ARMIJO_NOISE_ULPS: f64 = 16.0;

/// A fitted five-class logistic classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticModel {
    basis: PolynomialBasis,
    /// One weight vector per class, each of basis length.
    class_weights: Vec<Vec<f64>>,
    /// One intercept per class.
    intercepts: Vec<f64>,
    lambda: f64,
    iterations: u32,
    final_objective: f64,
    #[serde(skip)]
    objective_trace: Vec<f64>,
}

impl LogisticModel {
    /// Assemble a model from explicit parameters (validated for shape).
    pub fn new(
        basis: PolynomialBasis,
        class_weights: Vec<Vec<f64>>,
        intercepts: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if class_weights.len() != CLASS_COUNT || intercepts.len() != CLASS_COUNT {
            return Err(CoreError::DimensionMismatch {
                expected: CLASS_COUNT,
                got: class_weights.len().min(intercepts.len()),
            });
        }
        for weights in &class_weights {
            if weights.len() != basis.len() {
                return Err(CoreError::DimensionMismatch {
                    expected: basis.len(),
                    got: weights.len(),
                });
            }
        }
        Ok(Self {
            basis,
            class_weights,
            intercepts,
            lambda,
            iterations: 0,
            final_objective: f64::NAN,
            objective_trace: Vec::new(),
        })
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    pub fn class_weights(&self) -> &[Vec<f64>] {
        &self.class_weights
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    /// Objective value at every accepted solver iterate, starting point
    /// included; empty for hand-assembled models.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    /// Total scalar parameters: five × (monomials + intercept).
    pub fn coefficient_count(&self) -> usize {
        CLASS_COUNT * (self.basis.len() + 1)
    }

    /// Per-class linear scores at a raw input vector.
    pub fn scores(&self, x: &[f64]) -> Result<[f64; CLASS_COUNT]> {
        let phi = self.basis.expand(x)?;
        let mut scores = [0.0; CLASS_COUNT];
        for (k, score) in scores.iter_mut().enumerate() {
            *score = self.intercepts[k]
                + phi.iter().zip(self.class_weights[k].iter()).map(|(p, w)| p * w).sum::<f64>();
        }
        Ok(scores)
    }

    /// Predicted class in 1..=5: argmax score, ties to the lower class.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let scores = self.scores(x)?;
        let mut best = 0usize;
        for k in 1..CLASS_COUNT {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        Ok(best as u8 + 1)
    }
}

/// Fit a five-class logistic model on raw inputs and classes 1..=5.
pub fn fit_logistic(
    basis: &PolynomialBasis,
    xs: &[Vec<f64>],
    ys: &[u8],
    lambda: f64,
) -> Result<LogisticModel> {
    if xs.is_empty() {
        return Err(CoreError::Empty("training rows"));
    }
    if xs.len() != ys.len() {
        return Err(CoreError::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(CoreError::OutOfRange {
            what: "L2 strength",
            value: lambda,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let mut seen = [false; CLASS_COUNT];
    for &y in ys {
        if !(1..=CLASS_COUNT as u8).contains(&y) {
            return Err(CoreError::OutOfRange {
                what: "class label",
                value: f64::from(y),
                lo: 1.0,
                hi: CLASS_COUNT as f64,
            });
        }
        seen[usize::from(y) - 1] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(CoreError::SingleClass(ys[0]));
    }

    let mut phis = Vec::with_capacity(xs.len());
    for x in xs {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("feature values"));
        }
        phis.push(basis.expand(x)?);
    }

    let p = basis.len();
    let stride = p + 1; // weights then intercept, per class
    let dim = CLASS_COUNT * stride;
    let mut theta = vec![0.0; dim];

    // Objective, gradient, and per-sample class probabilities at theta;
    // the probabilities drive the Hessian-vector products below.
    let evaluate = |theta: &[f64]| -> (f64, Vec<f64>, Vec<[f64; CLASS_COUNT]>) {
        let mut objective = 0.0;
        let mut gradient = vec![0.0; dim];
        let mut probs = Vec::with_capacity(phis.len());
        for (phi, &y) in phis.iter().zip(ys.iter()) {
            let mut logits = [0.0; CLASS_COUNT];
            for (k, logit) in logits.iter_mut().enumerate() {
                let base = k * stride;
                *logit = theta[base + p]
                    + phi.iter().zip(&theta[base..base + p]).map(|(a, b)| a * b).sum::<f64>();
            }
            let top = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum_exp: f64 = logits.iter().map(|&z| (z - top).exp()).sum();
            let log_norm = top + sum_exp.ln();
            objective += log_norm - logits[usize::from(y) - 1];

            let mut row = [0.0; CLASS_COUNT];
            for k in 0..CLASS_COUNT {
                row[k] = (logits[k] - log_norm).exp();
                let indicator = f64::from(usize::from(y) - 1 == k);
                let residual = row[k] - indicator;
                let base = k * stride;
                for (slot, value) in gradient[base..base + p].iter_mut().zip(phi.iter()) {
                    *slot += residual * value;
                }
                gradient[base + p] += residual;
            }
            probs.push(row);
        }
        for (g, t) in gradient.iter_mut().zip(theta.iter()) {
            objective += 0.5 * lambda * t * t;
            *g += lambda * t;
        }
        (objective, gradient, probs)
    };

    // Hessian-vector product: Σ_i (diag(p_i) − p_i p_iᵀ) ⊗ φ̃_i φ̃_iᵀ + λI,
    // applied without forming the matrix.
    let hessian_vec = |probs: &[[f64; CLASS_COUNT]], v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|x| lambda * x).collect();
        for (phi, row) in phis.iter().zip(probs.iter()) {
            let mut a = [0.0; CLASS_COUNT];
            for (k, slot) in a.iter_mut().enumerate() {
                let base = k * stride;
                *slot = v[base + p]
                    + phi.iter().zip(&v[base..base + p]).map(|(x, y)| x * y).sum::<f64>();
            }
            let mean: f64 = row.iter().zip(a.iter()).map(|(pk, ak)| pk * ak).sum();
            for k in 0..CLASS_COUNT {
                let u = row[k] * (a[k] - mean);
                let base = k * stride;
                for (slot, value) in out[base..base + p].iter_mut().zip(phi.iter()) {
                    *slot += u * value;
                }
                out[base + p] += u;
            }
        }
        out
    };

    let (mut objective, mut gradient, mut probs) = evaluate(&theta);
    let mut trace = vec![objective];
    let mut iterations = 0u32;

    loop {
        let gradient_norm = norm(&gradient);
        if gradient_norm <= GRADIENT_TOLERANCE {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(CoreError::NoConvergence { iterations, gradient_norm });
        }

        let cg_tolerance = gradient_norm * gradient_norm.sqrt().min(0.5);
        let mut direction =
            conjugate_gradient(|v| hessian_vec(&probs, v), &gradient, cg_tolerance, 2 * dim);
        if dot(&direction, &gradient) >= 0.0 {
            direction = gradient.iter().map(|g| -g).collect();
        }
        let slope = dot(&direction, &gradient);

        let noise = ARMIJO_NOISE_ULPS * f64::EPSILON * objective.abs();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let candidate: Vec<f64> =
                theta.iter().zip(direction.iter()).map(|(t, d)| t + step * d).collect();
            let (new_objective, new_gradient, new_probs) = evaluate(&candidate);
            if new_objective <= objective + ARMIJO_C1 * step * slope + noise {
                accepted = Some((candidate, new_objective, new_gradient, new_probs));
                break;
            }
            step *= 0.5;
        }
        let Some((new_theta, new_objective, new_gradient, new_probs)) = accepted else {
            return Err(CoreError::NoConvergence { iterations, gradient_norm });
        };

        theta = new_theta;
        objective = new_objective;
        gradient = new_gradient;
        probs = new_probs;
        trace.push(objective);
        iterations += 1;
    }

    let mut class_weights = Vec::with_capacity(CLASS_COUNT);
    let mut intercepts = Vec::with_capacity(CLASS_COUNT);
    for k in 0..CLASS_COUNT {
        let base = k * stride;
        class_weights.push(theta[base..base + p].to_vec());
        intercepts.push(theta[base + p]);
    }
    Ok(LogisticModel {
        basis: basis.clone(),
        class_weights,
        intercepts,
        lambda,
        iterations,
        final_objective: objective,
        objective_trace: trace,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Approximately solve `H·d = −gradient` by conjugate gradients, to a
/// residual norm of `tolerance`. H is positive definite here (the L2
/// term guarantees it), but a non-positive-curvature guard keeps the
/// returned direction a descent direction regardless.
fn conjugate_gradient(
    hessian_vec: impl Fn(&[f64]) -> Vec<f64>,
    gradient: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Vec<f64> {
    let dim = gradient.len();
    let mut x = vec![0.0; dim];
    let mut r: Vec<f64> = gradient.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut rho = dot(&r, &r);
    for iteration in 0..max_iterations {
        if rho.sqrt() <= tolerance {
            break;
        }
        let hp = hessian_vec(&p);
        let curvature = dot(&p, &hp);
        if curvature <= 0.0 {
            if iteration == 0 {
                return gradient.iter().map(|g| -g).collect();
            }
            break;
        }
        let alpha = rho / curvature;
        for ((xi, ri), (pi, hi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(hp.iter())) {
            *xi += alpha * pi;
            *ri -= alpha * hi;
        }
        let rho_next = dot(&r, &r);
        let beta = rho_next / rho;
        rho = rho_next;
        for (pi, ri) in p.iter_mut().zip(r.iter()) {
            *pi = ri + beta * *pi;
        }
    }
    x
}
