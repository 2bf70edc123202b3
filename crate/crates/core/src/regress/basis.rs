//! Multivariate polynomial feature expansion.

use serde::Serialize;

use crate::error::{CoreError, Result};

/// All monomials in `input_dim` variables up to a total degree, in
/// graded lexicographic order: grades ascending, and within a grade the
/// exponent vectors in descending lexicographic order. The first entry
/// is always the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolynomialBasis {
    input_dim: usize,
    degree: u32,
    monomials: Vec<Vec<u32>>,
}

/// Number of monomials in `input_dim` variables of total degree at most
/// `degree`: C(input_dim + degree, degree).
pub fn basis_dimension(input_dim: usize, degree: u32) -> usize {
    let mut count = 1usize;
    for k in 1..=degree as usize {
        count = count * (input_dim + k) / k;
    }
    count
}

impl PolynomialBasis {
    pub fn new(input_dim: usize, degree: u32) -> Result<Self> {
        if input_dim == 0 {
            return Err(CoreError::Empty("input dimension"));
        }
        if !(1..=3).contains(&degree) {
            return Err(CoreError::OutOfRange {
                what: "polynomial degree",
                value: f64::from(degree),
                lo: 1.0,
                hi: 3.0,
            });
        }
        let mut monomials = Vec::with_capacity(basis_dimension(input_dim, degree));
        let mut exponents = vec![0u32; input_dim];
        for grade in 0..=degree {
            push_grade(&mut monomials, &mut exponents, 0, grade);
        }
        Ok(Self { input_dim, degree, monomials })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Exponent vectors, one per monomial, in basis order.
    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Evaluate every monomial at `x`.
    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(CoreError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(self
            .monomials
            .iter()
            .map(|exponents| {
                exponents
                    .iter()
                    .zip(x.iter())
                    .map(|(&e, &v)| v.powi(e as i32))
                    .product()
            })
            .collect())
    }
}

/// Append, in descending lexicographic order, every completion of
/// `exponents[..position]` whose remaining entries sum to `remaining`.
fn push_grade(
    monomials: &mut Vec<Vec<u32>>,
    exponents: &mut Vec<u32>,
    position: usize,
    remaining: u32,
) {
    if position + 1 == exponents.len() {
        exponents[position] = remaining;
        monomials.push(exponents.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        exponents[position] = e;
        push_grade(monomials, exponents, position + 1, remaining - e);
    }
    exponents[position] = 0;
}
