//! The drift-removal transform `G` and the coefficients of the transformed
//! SDE.
//!
//! For a piecewise Lipschitz drift `mu` with jumps at `xi_1 < ... < xi_k`,
//! `G` is a strictly increasing bi-Lipschitz bend of the real line that
//! absorbs the jumps:
//!
//! ```text
//! G(x) = x + sum_i nu_i (x - xi_i)|x - xi_i| phi((x - xi_i)/c),
//! nu_i = (mu(xi_i-) - mu(xi_i+)) / 2,
//! ```
//!
//! with the compactly supported bump `phi(u) = (1 - u^2)^3` on `[-1, 1]` and
//! zero outside. The local factor `(x - xi)|x - xi|` has one-sided second
//! derivatives `+-2` at `xi`, so
//!
//! ```text
//! G''(xi_i-) = -(mu(xi_i-) - mu(xi_i+)),   G''(xi_i+) = mu(xi_i-) - mu(xi_i+),
//! ```
//!
//! which is exactly the jump needed to cancel the drift discontinuity under
//! the Ito correction. `phi` vanishes to second order at the support edge,
//! so `G''` is continuous away from the breakpoints and the transformed
//! coefficients
//!
//! ```text
//! mu~ = (G' . mu + G''/2) o G^-1,    sigma~ = G' o G^-1
//! ```
//!
//! are Lipschitz. At a breakpoint itself `G''` is extended by
//! `G''(xi) := (mu(xi-) - mu(xi+)) + 2 (mu(xi+) - mu(xi))`, which keeps `mu~`
//! single-valued there.
//!
//! The half-width `c` is shrunk until
//! `sum_i |nu_i| * c * (2 ||phi||_inf + ||u^2 phi'||_inf) <= 1/2`, giving a
//! certified (not sampled) lower bound `G' >= 1/2` on the derivative.

pub mod lamperti;

use thiserror::Error;

use crate::drift::DriftSpec;

/// Relative tolerance used when inverting `G`.
const INVERSION_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("could not certify a positive derivative floor within {MAX_HALVINGS} half-width halvings")]
    CertificationFailed,
}

/// `phi(u) = (1 - u^2)^3` on `[-1, 1]`.
fn bump(u: f64) -> f64 {
    let w = 1.0 - u * u;
    w * w * w
}

/// `phi'(u) = -6u (1 - u^2)^2`.
fn bump_prime(u: f64) -> f64 {
    let w = 1.0 - u * u;
    -6.0 * u * w * w
}

/// `phi''(u) = 6 (1 - u^2)(5u^2 - 1)`.
fn bump_second(u: f64) -> f64 {
    let w = 1.0 - u * u;
    6.0 * w * (5.0 * u * u - 1.0)
}

/// Exact bound on `|d/dx[(x - xi)|x - xi| phi((x - xi)/c)]| / c`: that
/// derivative is `2u(1 - u^2)^2 (1 - 4u^2)` in `u = (x - xi)/c`, odd with
/// critical points at `u^2 = (17 +- sqrt(177))/56`, and its modulus peaks at
/// the larger root (~0.3608).
fn derivative_bound_factor() -> f64 {
    let u2 = (17.0 + 177.0f64.sqrt()) / 56.0;
    let u = u2.sqrt();
    let w = 1.0 - u2;
    (2.0 * u * w * w * (1.0 - 4.0 * u2)).abs()
}

/// Precomputed transform for one drift. Immutable after construction; all
/// evaluators are pure and shareable across workers.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    source: DriftSpec,
    breakpoints: Vec<f64>,
    amplitudes: Vec<f64>,
    half_width: f64,
    derivative_floor: f64,
    /// Extended second derivative at each breakpoint.
    extended_second: Vec<f64>,
    /// `sum_i |nu_i| c^2`, a global bound on `|G(x) - x|`.
    identity_shift: f64,
}

/// Milstein coefficients of the transformed SDE at one state, sharing a
/// single inversion of `G`.
#[derive(Debug, Clone, Copy)]
pub struct TransformedCoeffs {
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
    pub sigma_tilde_prime: f64,
}

/// Construct the transform for `spec`. For a drift with no breakpoints the
/// transform is the identity with derivative floor 1.
pub fn build_transform(spec: &DriftSpec) -> Result<TransformSpec, TransformError> {
    let breakpoints = spec.breakpoints().to_vec();
    let k = breakpoints.len();
    let mut amplitudes = Vec::with_capacity(k);
    let mut extended_second = Vec::with_capacity(k);
    for (i, &xi) in breakpoints.iter().enumerate() {
        let (left, right) = spec.one_sided_limits(i).expect("index in range");
        amplitudes.push((left - right) / 2.0);
        let value = spec.eval(xi);
        extended_second.push((left - right) + 2.0 * (right - value));
    }
    let min_gap = breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut half_width = 1.0f64.min(min_gap / 2.0);
    let sum_amp: f64 = amplitudes.iter().map(|a| a.abs()).sum();
    let factor = derivative_bound_factor();
    let mut halvings = 0;
    while sum_amp * half_width * factor > 0.5 {
        half_width /= 2.0;
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(TransformError::CertificationFailed);
        }
    }
    let derivative_floor = 1.0 - sum_amp * half_width * factor;
    let identity_shift = sum_amp * half_width * half_width;
    Ok(TransformSpec {
        source: spec.clone(),
        breakpoints,
        amplitudes,
        half_width,
        derivative_floor,
        extended_second,
        identity_shift,
    })
}

impl TransformSpec {
    pub fn source(&self) -> &DriftSpec {
        &self.source
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn derivative_floor(&self) -> f64 {
        self.derivative_floor
    }

    /// `G(x)`.
    pub fn g_eval(&self, x: f64) -> f64 {
        let mut v = x;
        let c = self.half_width;
        for (&xi, &nu) in self.breakpoints.iter().zip(&self.amplitudes) {
            let d = x - xi;
            if d.abs() < c {
                let u = d / c;
                v += nu * d * d.abs() * bump(u);
            }
        }
        v
    }

    /// `G'(x)`.
    pub fn g_prime(&self, x: f64) -> f64 {
        let mut v = 1.0;
        let c = self.half_width;
        for (&xi, &nu) in self.breakpoints.iter().zip(&self.amplitudes) {
            let d = x - xi;
            if d.abs() < c {
                let u = d / c;
                v += nu * (2.0 * d.abs() * bump(u) + d * d.abs() * bump_prime(u) / c);
            }
        }
        v
    }

    /// `G''(x)`; at a breakpoint this returns the extended value
    /// `(mu(xi-) - mu(xi+)) + 2 (mu(xi+) - mu(xi))`.
    pub fn g_second(&self, x: f64) -> f64 {
        let c = self.half_width;
        let mut v = 0.0;
        for (i, (&xi, &nu)) in self.breakpoints.iter().zip(&self.amplitudes).enumerate() {
            if x == xi {
                return self.extended_second[i];
            }
            let d = x - xi;
            if d.abs() < c {
                let u = d / c;
                v += nu
                    * (2.0 * d.signum() * bump(u)
                        + 4.0 * d.abs() * bump_prime(u) / c
                        + d * d.abs() * bump_second(u) / (c * c));
            }
        }
        v
    }

    /// `G^-1(y)` with `|G(x) - y| <= 1e-12 max(1, |y|)`, via safeguarded
    /// Newton: `G` deviates from the identity by at most `identity_shift`,
    /// so `[y - s, y + s]` always brackets the root, and the bisection
    /// fallback guards the kinks at the breakpoints.
    pub fn g_inverse(&self, y: f64) -> f64 {
        if self.identity_shift == 0.0 {
            return y;
        }
        let c = self.half_width;
        if y <= self.breakpoints[0] - c || y >= self.breakpoints[self.breakpoints.len() - 1] + c {
            return y;
        }
        let s = self.identity_shift;
        let tol = INVERSION_TOL * y.abs().max(1.0);
        let (mut lo, mut hi) = (y - s, y + s);
        let mut x = y;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let g = self.g_eval(x) - y;
            if g.abs() <= tol {
                return x;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = g / self.g_prime(x);
            let candidate = x - step;
            x = if candidate > lo && candidate < hi {
                candidate
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }

    /// `(G^-1)'(y) = 1 / G'(G^-1(y))`.
    pub fn g_inverse_prime(&self, y: f64) -> f64 {
        1.0 / self.g_prime(self.g_inverse(y))
    }

    /// `(G^-1)''(y) = -G''(x) / G'(x)^3` at `x = G^-1(y)`, using the
    /// extended `G''` at breakpoint images.
    pub fn g_inverse_second(&self, y: f64) -> f64 {
        let x = self.g_inverse(y);
        let gp = self.g_prime(x);
        -self.g_second(x) / (gp * gp * gp)
    }

    /// `mu~(y) = G'(x) mu(x) + G''(x)/2` at `x = G^-1(y)`.
    pub fn mu_tilde(&self, y: f64) -> f64 {
        let x = self.g_inverse(y);
        self.g_prime(x) * self.source.eval(x) + 0.5 * self.g_second(x)
    }

    /// `sigma~(y) = G'(G^-1(y))`.
    pub fn sigma_tilde(&self, y: f64) -> f64 {
        self.g_prime(self.g_inverse(y))
    }

    /// All Milstein coefficients at `y` with one inversion:
    /// `sigma~'(y) = G''(x)/G'(x)`.
    pub fn transformed_coeffs(&self, y: f64) -> TransformedCoeffs {
        let x = self.g_inverse(y);
        let gp = self.g_prime(x);
        let gs = self.g_second(x);
        TransformedCoeffs {
            mu_tilde: gp * self.source.eval(x) + 0.5 * gs,
            sigma_tilde: gp,
            sigma_tilde_prime: gs / gp,
        }
    }
}
