//! Exponential quality-versus-impairment curve fitting:
//! `qoe = α·e^(−β·qos) + γ`, by damped Gauss–Newton from a log-spaced
//! grid of decay-rate starts.

use serde::Serialize;

use crate::error::{CoreError, Result};

const BETA_STARTS: usize = 25;
const BETA_START_LO: f64 = 1e-6;
const BETA_START_HI: f64 = 1.0;
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 500;

/// Fitted exponential curve `α·e^(−β·x) + γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqxModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Residual sum of squares on the fitted data.
    pub residual: f64,
    /// Gauss–Newton iterations of the winning start.
    pub iterations: usize,
}

impl IqxModel {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.alpha * (-self.beta * x).exp() + self.gamma
    }
}

/// Fit the curve minimizing `Σ (qoe_i − α·e^(−β·qos_i) − γ)²`.
///
/// Each start fixes β, takes the closed-form least-squares (α, γ), then
/// refines all three parameters with damped Gauss–Newton until the step
/// norm drops below 1e-10 or 500 iterations pass; the best finite
/// outcome across starts wins.
pub fn fit_iqx(qos: &[f64], qoe: &[f64]) -> Result<IqxModel> {
    if qos.len() != qoe.len() {
        return Err(CoreError::LengthMismatch { left: qos.len(), right: qoe.len() });
    }
    if qos.len() < 4 {
        return Err(CoreError::TooFewRows { min: 4, got: qos.len() });
    }
    if qos.iter().chain(qoe.iter()).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("curve-fit inputs"));
    }
    if qos.iter().all(|&x| x == qos[0]) {
        return Err(CoreError::ConstantInput("impairment values"));
    }

    let mut best: Option<IqxModel> = None;
    let mut best_failed_residual = f64::INFINITY;
    let ratio = (BETA_START_HI / BETA_START_LO).powf(1.0 / (BETA_STARTS - 1) as f64);
    for start in 0..BETA_STARTS {
        let beta0 = BETA_START_LO * ratio.powi(start as i32);
        match refine_from(qos, qoe, beta0) {
            Some(model) => {
                if best.as_ref().is_none_or(|b| model.residual < b.residual) {
                    best = Some(model);
                }
            }
            None => {
                if let Some((_, _, _, sse)) = linear_in_beta(qos, qoe, beta0) {
                    best_failed_residual = best_failed_residual.min(sse);
                }
            }
        }
    }
    best.ok_or(CoreError::NoStartConverged { best_residual: best_failed_residual })
}

/// For fixed β, the least-squares (α, γ) against basis {e^(−βx), 1} and
/// the resulting residual sum of squares; `None` when degenerate.
fn linear_in_beta(qos: &[f64], qoe: &[f64], beta: f64) -> Option<(f64, f64, f64, f64)> {
    let n = qos.len() as f64;
    let mut se = 0.0;
    let mut see = 0.0;
    let mut sy = 0.0;
    let mut sey = 0.0;
    for (&x, &y) in qos.iter().zip(qoe.iter()) {
        let e = (-beta * x).exp();
        se += e;
        see += e * e;
        sy += y;
        sey += e * y;
    }
    let det = see * n - se * se;
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let alpha = (sey * n - se * sy) / det;
    let gamma = (see * sy - se * sey) / det;
    let sse: f64 = qos
        .iter()
        .zip(qoe.iter())
        .map(|(&x, &y)| {
            let r = y - alpha * (-beta * x).exp() - gamma;
            r * r
        })
        .sum();
    (alpha.is_finite() && gamma.is_finite() && sse.is_finite()).then_some((alpha, beta, gamma, sse))
}

fn sum_squares(qos: &[f64], qoe: &[f64], p: [f64; 3]) -> f64 {
    qos.iter()
        .zip(qoe.iter())
        .map(|(&x, &y)| {
            let r = y - p[0] * (-p[1] * x).exp() - p[2];
            r * r
        })
        .sum()
}

/// Damped Gauss–Newton refinement of (α, β, γ) from one β start.
fn refine_from(qos: &[f64], qoe: &[f64], beta0: f64) -> Option<IqxModel> {
    let (alpha, beta, gamma, mut sse) = linear_in_beta(qos, qoe, beta0)?;
    let mut params = [alpha, beta, gamma];
    let mut damping = 1e-8;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations JᵀJ·Δ = Jᵀr for residuals r = y − f(x).
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (&x, &y) in qos.iter().zip(qoe.iter()) {
            let e = (-params[1] * x).exp();
            let r = y - params[0] * e - params[2];
            let j = [e, -params[0] * x * e, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
                jtr[a] += j[a] * r;
            }
        }

        let mut step = None;
        for _ in 0..60 {
            let mut damped = jtj;
            for (d, row) in damped.iter_mut().enumerate() {
                row[d] += damping;
            }
            if let Some(delta) = solve3(damped, jtr) {
                let candidate = [
                    params[0] + delta[0],
                    params[1] + delta[1],
                    params[2] + delta[2],
                ];
                let candidate_sse = sum_squares(qos, qoe, candidate);
                if candidate_sse.is_finite() && candidate_sse <= sse {
                    step = Some((candidate, candidate_sse, delta));
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }

        let Some((candidate, candidate_sse, delta)) = step else {
            // No downhill step exists at any damping: a stationary point.
            break;
        };
        params = candidate;
        sse = candidate_sse;
        damping = (damping / 10.0).max(1e-12);
        let step_norm =
            (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        if step_norm < STEP_TOLERANCE {
            break;
        }
    }

    (params.iter().all(|v| v.is_finite()) && sse.is_finite()).then_some(IqxModel {
        alpha: params[0],
        beta: params[1],
        gamma: params[2],
        residual: sse,
        iterations,
    })
}

/// Solve a 3×3 linear system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col];
        for row in col + 1..3 {
            let factor = a[row][col] / pivot_row[col];
            for (entry, pivot_entry) in a[row].iter_mut().zip(pivot_row.iter()).skip(col) {
                *entry -= factor * pivot_entry;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut sum = b[col];
        for k in col + 1..3 {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{fit_linear, PolynomialBasis};

    fn impairment_grid() -> Vec<f64> {
        (0..36).map(|k| 3.0 + k as f64 * (91.0 - 3.0) / 35.0).collect()
    }

    #[test]
    fn exact_curve_parameters_are_recovered() {
        let (alpha, beta, gamma) = (130.021, 3.872e-4, -124.632);
        let xs = impairment_grid();
        let ys: Vec<f64> = xs.iter().map(|&x| alpha * (-beta * x).exp() + gamma).collect();
        let model = fit_iqx(&xs, &ys).unwrap();
        assert!((model.alpha - alpha).abs() / alpha.abs() < 1e-4, "alpha {}", model.alpha);
        assert!((model.beta - beta).abs() / beta.abs() < 1e-4, "beta {}", model.beta);
        assert!((model.gamma - gamma).abs() / gamma.abs() < 1e-4, "gamma {}", model.gamma);
        assert!(model.residual < 1e-10);
    }

    #[test]
    fn steep_decay_is_also_recovered() {
        let (alpha, beta, gamma) = (4.0, 0.25, 1.0);
        let xs: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| alpha * (-beta * x).exp() + gamma).collect();
        let model = fit_iqx(&xs, &ys).unwrap();
        assert!((model.alpha - alpha).abs() < 1e-6);
        assert!((model.beta - beta).abs() < 1e-6);
        assert!((model.gamma - gamma).abs() < 1e-6);
    }

    #[test]
    fn constant_data_reaches_zero_residual() {
        let xs = impairment_grid();
        let ys = vec![1.0; xs.len()];
        let model = fit_iqx(&xs, &ys).unwrap();
        assert!(model.residual < 1e-12, "residual {}", model.residual);
        for &x in &xs {
            assert!((model.evaluate(x) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn straight_line_data_is_matched_to_line_quality() {
        let xs = impairment_grid();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 - 0.01 * x).collect();
        let curve = fit_iqx(&xs, &ys).unwrap();

        let basis = PolynomialBasis::new(1, 1).unwrap();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let line = fit_linear(&basis, &rows, &ys).unwrap();
        let line_sse: f64 = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| {
                let e = y - line.predict(&[*x]).unwrap();
                e * e
            })
            .sum();
        assert!(
            curve.residual <= line_sse + 1e-6,
            "curve {} vs line {line_sse}",
            curve.residual
        );
    }

    #[test]
    fn preconditions_are_enforced() {
        assert!(matches!(
            fit_iqx(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(CoreError::TooFewRows { min: 4, got: 3 })
        ));
        assert!(matches!(
            fit_iqx(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(CoreError::ConstantInput(_))
        ));
        assert!(fit_iqx(&[1.0, 2.0], &[1.0]).is_err());
        assert!(fit_iqx(&[1.0, f64::NAN, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn evaluate_matches_the_closed_form() {
        let model =
            IqxModel { alpha: 2.0, beta: 0.5, gamma: -1.0, residual: 0.0, iterations: 0 };
        assert!((model.evaluate(0.0) - 1.0).abs() < 1e-15);
        assert!((model.evaluate(2.0) - (2.0 * (-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }
}
