//! Regression primitives: polynomial basis expansion, least-squares
//! linear models, Likert-bound quantization, multinomial logistic
//! classifiers, and the exponential quality/impairment curve fit.

mod basis;
mod iqx;
mod linear;
mod logistic;

pub use basis::{basis_dimension, PolynomialBasis};
pub use iqx::{fit_iqx, IqxModel};
pub use linear::{bound, bound_scalar, fit_linear, LinearModel};
pub use logistic::{fit_logistic, LogisticModel, CLASS_COUNT, DEFAULT_LAMBDA};
