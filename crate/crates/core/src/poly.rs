//! Dense univariate polynomials with coefficients in ascending degree order.

use serde::{Deserialize, Serialize};

/// A polynomial `c0 + c1*x + c2*x^2 + ...`. An empty coefficient list is the
/// zero polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Coefficients are kept verbatim (no trailing-zero trimming) so that
    /// serialized specs round-trip exactly.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    /// `a + b*x`.
    pub fn affine(a: f64, b: f64) -> Self {
        Polynomial { coeffs: vec![a, b] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Index of the highest coefficient that is actually nonzero; 0 for the
    /// zero polynomial and for constants.
    pub fn effective_degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, &c)| c * j as f64)
            .collect();
        Polynomial { coeffs }
    }

    /// Returns `self + c` as a new polynomial.
    pub fn plus_constant(&self, c: f64) -> Polynomial {
        let mut coeffs = self.coeffs.clone();
        if coeffs.is_empty() {
            coeffs.push(c);
        } else {
            coeffs[0] += c;
        }
        Polynomial { coeffs }
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Upper bound for `|p(x)|` on `[-m, m]` from the coefficient magnitudes.
    pub fn magnitude_bound(&self, m: f64) -> f64 {
        let mut bound = 0.0;
        let mut pow = 1.0;
        for &c in &self.coeffs {
            bound += c.abs() * pow;
            pow *= m.max(1e-300);
        }
        bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_naive() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let x = 1.7;
        let naive = 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x * x * x;
        assert!((p.eval(x) - naive).abs() < 1e-12);
    }

    #[test]
    fn zero_polynomial() {
        assert_eq!(Polynomial::zero().eval(4.2), 0.0);
        assert_eq!(Polynomial::zero().effective_degree(), 0);
    }

    #[test]
    fn effective_degree_ignores_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.effective_degree(), 1);
    }

    #[test]
    fn derivative_drops_degree() {
        let p = Polynomial::new(vec![5.0, 1.0, 3.0]);
        let d = p.derivative();
        assert_eq!(d.coeffs(), &[1.0, 6.0]);
        assert_eq!(Polynomial::constant(2.0).derivative(), Polynomial::zero());
    }
}
