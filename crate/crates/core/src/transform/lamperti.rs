//! Reduction of an elliptic-diffusion SDE to unit diffusion.
//!
//! For `dX = mu(X) dt + sigma(X) dW` with `inf sigma > 0`, the state change
//! `phi(x) = integral_0^x 1/sigma(u) du` turns `Z = phi(X)` into a
//! unit-diffusion SDE with drift
//!
//! ```text
//! mu_phi = (mu/sigma - sigma'/2) o phi^-1.
//! ```
//!
//! `phi` is evaluated by adaptive Simpson quadrature split at the
//! breakpoints of `sigma`, with a cached monotone antiderivative table over
//! a configured state range: table nodes anchor exact evaluations and
//! bracket the monotone root find for `phi^-1`; a linear-interpolation fast
//! path is available for solver loops. Positivity of `sigma` is validated on
//! the table range up front and re-checked at every quadrature evaluation,
//! so leaving the elliptic region aborts with a diagnostic instead of
//! returning garbage.

use thiserror::Error;

use crate::drift::{DriftError, DriftSpec};
use crate::poly::Polynomial;

const PHI_ABS_TOL: f64 = 1e-12;
const INVERSION_TOL: f64 = 1e-12;
const TABLE_INTERVALS: usize = 4096;
const MAX_SIMPSON_DEPTH: usize = 48;

#[derive(Debug, Error)]
pub enum LampertiError {
    #[error("diffusion coefficient not elliptic: sigma({at}) = {value} below floor {floor}")]
    NotElliptic { at: f64, value: f64, floor: f64 },
    #[error("ellipticity floor must be positive (got {0})")]
    FloorNotPositive(f64),
    #[error("table range must be a finite interval containing 0")]
    BadRange,
    #[error("constant diffusion value must be positive (got {0})")]
    NonPositiveConstant(f64),
    #[error("could not bracket phi^-1({0})")]
    BracketFailed(f64),
    #[error(transparent)]
    Drift(#[from] DriftError),
}

/// Precomputed Lamperti machinery for one diffusion coefficient. Immutable
/// and shareable once built.
#[derive(Debug, Clone)]
pub struct LampertiSpec {
    sigma: DriftSpec,
    sigma_prime: DriftSpec,
    floor: f64,
    table_lo: f64,
    node_step: f64,
    /// `phi` at the table nodes; strictly increasing.
    table: Vec<f64>,
}

impl LampertiSpec {
    /// Build for `sigma` with ellipticity floor `floor` over the state range
    /// `[lo, hi]` (extended to contain 0). Positivity at the configured
    /// floor is checked densely on the range.
    pub fn build(sigma: DriftSpec, floor: f64, range: (f64, f64)) -> Result<Self, LampertiError> {
        if !(floor > 0.0) {
            return Err(LampertiError::FloorNotPositive(floor));
        }
        let (mut lo, mut hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(LampertiError::BadRange);
        }
        lo = lo.min(0.0);
        hi = hi.max(0.0);
        let sigma_prime = sigma.derivative_piecewise();
        let node_step = (hi - lo) / TABLE_INTERVALS as f64;
        // Validate sigma >= floor at the nodes and at breakpoint limits
        // inside the range.
        for j in 0..=TABLE_INTERVALS {
            let x = lo + node_step * j as f64;
            let v = sigma.eval(x);
            if !(v >= floor) {
                return Err(LampertiError::NotElliptic {
                    at: x,
                    value: v,
                    floor,
                });
            }
        }
        for (i, &xi) in sigma.breakpoints().iter().enumerate() {
            if xi < lo || xi > hi {
                continue;
            }
            let (left, right) = sigma.one_sided_limits(i).expect("index in range");
            for v in [left, right, sigma.eval(xi)] {
                if !(v >= floor) {
                    return Err(LampertiError::NotElliptic {
                        at: xi,
                        value: v,
                        floor,
                    });
                }
            }
        }
        let mut spec = LampertiSpec {
            sigma,
            sigma_prime,
            floor,
            table_lo: lo,
            node_step,
            table: Vec::new(),
        };
        spec.table = spec.build_table()?;
        Ok(spec)
    }

    fn build_table(&self) -> Result<Vec<f64>, LampertiError> {
        let mut table = vec![0.0; TABLE_INTERVALS + 1];
        // Anchor at the node nearest to 0 and accumulate outward so phi(0)
        // stays exactly 0 relative to the anchor.
        let lo = self.table_lo;
        let zero_j = ((0.0 - lo) / self.node_step).round() as usize;
        let zero_j = zero_j.min(TABLE_INTERVALS);
        let node = |j: usize| lo + self.node_step * j as f64;
        table[zero_j] = self.integrate(0.0, node(zero_j), PHI_ABS_TOL * 0.5)?;
        for j in (zero_j + 1)..=TABLE_INTERVALS {
            table[j] = table[j - 1] + self.integrate(node(j - 1), node(j), 1e-15)?;
        }
        for j in (0..zero_j).rev() {
            table[j] = table[j + 1] - self.integrate(node(j), node(j + 1), 1e-15)?;
        }
        Ok(table)
    }

    pub fn sigma(&self) -> &DriftSpec {
        &self.sigma
    }

    pub fn sigma_prime(&self) -> &DriftSpec {
        &self.sigma_prime
    }

    fn inv_sigma(&self, x: f64) -> Result<f64, LampertiError> {
        let v = self.sigma.eval(x);
        if !(v > 0.0) {
            return Err(LampertiError::NotElliptic {
                at: x,
                value: v,
                floor: self.floor,
            });
        }
        Ok(1.0 / v)
    }

    /// Signed integral of `1/sigma` over `[a, b]`, split at the breakpoints
    /// of `sigma` so each Simpson recursion sees a smooth integrand.
    fn integrate(&self, a: f64, b: f64, tol: f64) -> Result<f64, LampertiError> {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut cuts = vec![lo];
        for &xi in self.sigma.breakpoints() {
            if xi > lo && xi < hi {
                cuts.push(xi);
            }
        }
        cuts.push(hi);
        let total = hi - lo;
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let part_tol = tol * ((w[1] - w[0]) / total).max(1e-3);
            acc += self.adaptive_simpson(w[0], w[1], part_tol)?;
        }
        Ok(sign * acc)
    }

    fn adaptive_simpson(&self, a: f64, b: f64, tol: f64) -> Result<f64, LampertiError> {
        let fa = self.inv_sigma(a)?;
        let fb = self.inv_sigma(b)?;
        let m = 0.5 * (a + b);
        let fm = self.inv_sigma(m)?;
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.simpson_step(a, b, fa, fm, fb, whole, tol, 0)
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson_step(
        &self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, LampertiError> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.inv_sigma(lm)?;
        let frm = self.inv_sigma(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth >= MAX_SIMPSON_DEPTH || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        let half_tol = 0.5 * tol;
        Ok(self.simpson_step(a, m, fa, flm, fm, left, half_tol, depth + 1)?
            + self.simpson_step(m, b, fm, frm, fb, right, half_tol, depth + 1)?)
    }

    /// `phi(x)` by adaptive quadrature, anchored at the nearest table node.
    pub fn phi(&self, x: f64) -> Result<f64, LampertiError> {
        let last = self.table.len() - 1;
        let pos = (x - self.table_lo) / self.node_step;
        if pos < 0.0 {
            return Ok(self.table[0] + self.integrate(self.table_lo, x, PHI_ABS_TOL)?);
        }
        if pos >= last as f64 {
            let top = self.table_lo + self.node_step * last as f64;
            return Ok(self.table[last] + self.integrate(top, x, PHI_ABS_TOL)?);
        }
        let j = pos.floor() as usize;
        let node = self.table_lo + self.node_step * j as f64;
        Ok(self.table[j] + self.integrate(node, x, PHI_ABS_TOL * 0.5)?)
    }

    /// Linear interpolation between table nodes; solver fast path, accurate
    /// to O(node_step^2) inside the table and clamped exact outside.
    pub fn phi_linear(&self, x: f64) -> Result<f64, LampertiError> {
        let last = self.table.len() - 1;
        let pos = (x - self.table_lo) / self.node_step;
        if pos <= 0.0 || pos >= last as f64 {
            return self.phi(x);
        }
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        Ok(self.table[j] + frac * (self.table[j + 1] - self.table[j]))
    }

    /// Monotone root find for `phi^-1(y)`: table bracket plus safeguarded
    /// Newton with `phi' = 1/sigma`.
    pub fn phi_inverse(&self, y: f64) -> Result<f64, LampertiError> {
        let last = self.table.len() - 1;
        let node = |j: usize| self.table_lo + self.node_step * j as f64;
        let (mut lo, mut hi);
        if y < self.table[0] {
            hi = node(0);
            let mut step = self.node_step.max(1.0);
            lo = hi - step;
            let mut tries = 0;
            while self.phi(lo)? > y {
                step *= 2.0;
                lo -= step;
                tries += 1;
                if tries > 200 {
                    return Err(LampertiError::BracketFailed(y));
                }
            }
        } else if y > self.table[last] {
            lo = node(last);
            let mut step = self.node_step.max(1.0);
            hi = lo + step;
            let mut tries = 0;
            while self.phi(hi)? < y {
                step *= 2.0;
                hi += step;
                tries += 1;
                if tries > 200 {
                    return Err(LampertiError::BracketFailed(y));
                }
            }
        } else {
            let j = match self
                .table
                .binary_search_by(|v| v.partial_cmp(&y).expect("finite table"))
            {
                Ok(j) => return Ok(node(j)),
                Err(j) => j,
            };
            lo = node(j - 1);
            hi = node(j);
        }
        let tol = INVERSION_TOL * y.abs().max(1.0);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.phi(x)? - y;
            if g.abs() <= tol {
                return Ok(x);
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let candidate = x - g * self.sigma.eval(x);
            x = if candidate > lo && candidate < hi {
                candidate
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(x)
    }

    /// Drift of the unit-diffusion SDE:
    /// `mu_phi(y) = mu(x)/sigma(x) - sigma'(x)/2` at `x = phi^-1(y)`.
    pub fn unit_diffusion_drift(&self, mu: &DriftSpec, y: f64) -> Result<f64, LampertiError> {
        let x = self.phi_inverse(y)?;
        Ok(mu.eval(x) / self.sigma.eval(x) - 0.5 * self.sigma_prime.eval(x))
    }
}

/// Exact reduction for constant `sigma = s`: `phi(x) = x/s`, so the reduced
/// drift is again piecewise polynomial with breakpoints `xi/s` and piece
/// coefficients `a_j s^(j-1)`.
pub fn reduce_constant_sigma(mu: &DriftSpec, s: f64) -> Result<DriftSpec, LampertiError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(LampertiError::NonPositiveConstant(s));
    }
    let breakpoints: Vec<f64> = mu.breakpoints().iter().map(|xi| xi / s).collect();
    let pieces: Vec<Polynomial> = mu
        .pieces()
        .iter()
        .map(|p| {
            let mut scale = 1.0 / s;
            let coeffs: Vec<f64> = p
                .coeffs()
                .iter()
                .map(|&a| {
                    let c = a * scale;
                    scale *= s;
                    c
                })
                .collect();
            Polynomial::new(coeffs)
        })
        .collect();
    let point_values: Vec<Option<f64>> = mu
        .breakpoints()
        .iter()
        .zip(mu.point_values())
        .map(|(&xi, pv)| pv.map(|_| mu.eval(xi) / s))
        .collect();
    Ok(DriftSpec::with_point_values(
        breakpoints,
        pieces,
        point_values,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftSpec;
    use crate::poly::Polynomial;

    fn step() -> DriftSpec {
        DriftSpec::new(
            vec![0.0],
            vec![Polynomial::zero(), Polynomial::constant(1.0)],
        )
        .unwrap()
    }

    /// sigma = 2 + x^2 clamped to [-1, 1] with C^1 affine continuations.
    fn curved_sigma() -> DriftSpec {
        DriftSpec::new(
            vec![-1.0, 1.0],
            vec![
                Polynomial::affine(1.0, -2.0),
                Polynomial::new(vec![2.0, 0.0, 1.0]),
                Polynomial::affine(1.0, 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_sigma_is_exact() {
        let sigma = DriftSpec::lipschitz(Polynomial::constant(2.0)).unwrap();
        let l = LampertiSpec::build(sigma, 0.5, (-10.0, 10.0)).unwrap();
        for x in [-5.0, -0.3, 0.0, 1.0, 7.5] {
            assert!((l.phi(x).unwrap() - x / 2.0).abs() <= 1e-12);
        }
        let mu = step();
        for y in [-2.0, -0.1, 0.3, 4.0] {
            let expected = mu.eval(2.0 * y) / 2.0;
            assert!((l.unit_diffusion_drift(&mu, y).unwrap() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn unit_sigma_is_identity() {
        let sigma = DriftSpec::lipschitz(Polynomial::constant(1.0)).unwrap();
        let l = LampertiSpec::build(sigma, 0.5, (-5.0, 5.0)).unwrap();
        let mu = step();
        for x in [-2.0, 0.0, 0.7, 3.0] {
            assert!((l.phi(x).unwrap() - x).abs() <= 1e-12);
            assert!((l.unit_diffusion_drift(&mu, x).unwrap() - mu.eval(x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn quadrature_matches_brute_force_oracle() {
        let l = LampertiSpec::build(curved_sigma(), 1.0, (-5.0, 5.0)).unwrap();
        // Midpoint Riemann sum with 10^7 panels over [0, 1].
        let panels = 10_000_000usize;
        let h = 1.0 / panels as f64;
        let sigma = curved_sigma();
        let mut acc = 0.0;
        let mut comp = 0.0;
        for i in 0..panels {
            let x = (i as f64 + 0.5) * h;
            let term = h / sigma.eval(x);
            let t = acc + term;
            comp += if acc.abs() >= term.abs() {
                (acc - t) + term
            } else {
                (term - t) + acc
            };
            acc = t;
        }
        let oracle = acc + comp;
        let got = l.phi(1.0).unwrap();
        assert!((got - oracle).abs() <= 1e-9, "phi(1) = {got}, oracle = {oracle}");
        // Closed form for this sigma: atan(x / sqrt(2)) / sqrt(2).
        let closed = (1.0 / 2.0f64.sqrt()) * (1.0 / 2.0f64.sqrt()).atan();
        assert!((got - closed).abs() <= 1e-9);
    }

    #[test]
    fn phi_inverse_round_trips() {
        let l = LampertiSpec::build(curved_sigma(), 1.0, (-5.0, 5.0)).unwrap();
        for x in [-4.5, -0.9, 0.0, 0.4, 2.0, 4.9, 7.0] {
            let y = l.phi(x).unwrap();
            let back = l.phi_inverse(y).unwrap();
            assert!((back - x).abs() <= 1e-9, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn phi_linear_tracks_exact_inside_table() {
        let l = LampertiSpec::build(curved_sigma(), 1.0, (-5.0, 5.0)).unwrap();
        for x in [-3.3, -0.01, 0.77, 4.2] {
            let exact = l.phi(x).unwrap();
            let fast = l.phi_linear(x).unwrap();
            assert!((exact - fast).abs() <= 1e-5);
        }
    }

    #[test]
    fn ellipticity_failures_are_diagnosed() {
        // sigma dips through the floor inside the range.
        let sigma = DriftSpec::lipschitz(Polynomial::affine(2.0, 1.0)).unwrap();
        let err = LampertiSpec::build(sigma.clone(), 0.5, (-5.0, 5.0)).unwrap_err();
        assert!(matches!(err, LampertiError::NotElliptic { .. }));
        // Valid on a narrow range, then a phi query walks outside of it.
        let l = LampertiSpec::build(sigma, 0.5, (-1.0, 5.0)).unwrap();
        assert!(matches!(
            l.phi(-4.0),
            Err(LampertiError::NotElliptic { .. })
        ));
        assert!(matches!(
            LampertiSpec::build(
                DriftSpec::lipschitz(Polynomial::constant(1.0)).unwrap(),
                0.0,
                (-1.0, 1.0)
            ),
            Err(LampertiError::FloorNotPositive(_))
        ));
    }

    #[test]
    fn constant_reduction_rescales_spec() {
        let mu = DriftSpec::new(
            vec![1.0],
            vec![Polynomial::affine(0.0, 2.0), Polynomial::affine(-3.0, 2.0)],
        )
        .unwrap();
        let reduced = reduce_constant_sigma(&mu, 2.0).unwrap();
        assert_eq!(reduced.breakpoints(), &[0.5]);
        for y in [-2.0, 0.0, 0.49, 0.5, 0.51, 3.0] {
            assert!((reduced.eval(y) - mu.eval(2.0 * y) / 2.0).abs() <= 1e-12);
        }
        assert!(reduce_constant_sigma(&mu, 0.0).is_err());
        assert!(reduce_constant_sigma(&mu, -1.0).is_err());
    }
}
