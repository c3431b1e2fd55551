//! Piecewise polynomial drift coefficients with finitely many jumps.
//!
//! A drift `mu` is described by breakpoints `xi_1 < ... < xi_k` and `k + 1`
//! polynomial pieces, piece `i` living on the open interval
//! `(xi_{i-1}, xi_i)` with `xi_0 = -inf` and `xi_{k+1} = +inf`. The two
//! unbounded end pieces must be affine so that every piece is Lipschitz on
//! its interval with a Lipschitz derivative. At a breakpoint the function
//! value defaults to the right limit; an explicit point value may override
//! it.
//!
//! Such a drift splits into a globally Lipschitz part plus a step function
//! plus single-point corrections:
//!
//! ```text
//! mu = mu_cont + sum_i alpha_i 1_[xi_i, inf) + sum_i gamma_i 1_{xi_i}
//! ```
//!
//! with `alpha_i = mu(xi_i+) - mu(xi_i-)` and `gamma_i = mu(xi_i) - mu(xi_i+)`.
//! The point corrections `gamma_i` are carried exactly but are almost surely
//! irrelevant to SDE trajectories (they act on a Lebesgue-null set); they
//! matter only for deterministic evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;

/// Engineering cap on the number of breakpoints a config may declare.
pub const MAX_BREAKPOINTS: usize = 64;

/// Breakpoints closer than this are rejected rather than merged; silent
/// merging would hide user errors.
pub const MIN_BREAKPOINT_GAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("need exactly one more piece than breakpoints (got {pieces} pieces for {breakpoints} breakpoints)")]
    PieceCountMismatch { breakpoints: usize, pieces: usize },
    #[error("breakpoints must be strictly increasing with gap > {MIN_BREAKPOINT_GAP:e} (violated near index {index})")]
    BreakpointsNotIncreasing { index: usize },
    #[error("at most {MAX_BREAKPOINTS} breakpoints are supported (got {got})")]
    TooManyBreakpoints { got: usize },
    #[error("unbounded end pieces must be affine (piece {index} has degree {degree})")]
    EndPieceNotAffine { index: usize, degree: usize },
    #[error("non-finite value in drift description")]
    NonFinite,
    #[error("point value index {index} out of range for {breakpoints} breakpoints")]
    PointValueIndex { index: usize, breakpoints: usize },
    #[error("breakpoint index {index} out of range (k = {breakpoints})")]
    BreakpointIndex { index: usize, breakpoints: usize },
    #[error("drift config parse error: {0}")]
    Parse(String),
}

/// Anything that can be evaluated as a drift coefficient. Implemented by
/// [`DriftSpec`] and by plain closures, so solvers also accept opaque
/// function handles (no serialization or validation guarantees for those).
pub trait DriftFn {
    fn eval(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> DriftFn for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Validated piecewise polynomial drift. Immutable after construction; all
/// operations are pure, so values can be shared freely across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    breakpoints: Vec<f64>,
    pieces: Vec<Polynomial>,
    point_values: Vec<Option<f64>>,
}

impl DriftFn for DriftSpec {
    fn eval(&self, x: f64) -> f64 {
        DriftSpec::eval(self, x)
    }
}

impl DriftSpec {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Polynomial>) -> Result<Self, DriftError> {
        let k = breakpoints.len();
        Self::with_point_values(breakpoints, pieces, vec![None; k])
    }

    /// A drift with no breakpoints. The single piece doubles as both end
    /// pieces, so it must be affine.
    pub fn lipschitz(piece: Polynomial) -> Result<Self, DriftError> {
        Self::new(Vec::new(), vec![piece])
    }

    pub fn with_point_values(
        breakpoints: Vec<f64>,
        pieces: Vec<Polynomial>,
        point_values: Vec<Option<f64>>,
    ) -> Result<Self, DriftError> {
        let k = breakpoints.len();
        if pieces.len() != k + 1 {
            return Err(DriftError::PieceCountMismatch {
                breakpoints: k,
                pieces: pieces.len(),
            });
        }
        if k > MAX_BREAKPOINTS {
            return Err(DriftError::TooManyBreakpoints { got: k });
        }
        if point_values.len() != k {
            return Err(DriftError::PointValueIndex {
                index: point_values.len(),
                breakpoints: k,
            });
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || pieces.iter().any(|p| !p.all_finite())
            || point_values.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(DriftError::NonFinite);
        }
        for i in 1..k {
            if !(breakpoints[i] - breakpoints[i - 1] > MIN_BREAKPOINT_GAP) {
                return Err(DriftError::BreakpointsNotIncreasing { index: i });
            }
        }
        for (index, piece) in [(0, &pieces[0]), (k, &pieces[k])] {
            let degree = piece.effective_degree();
            if degree > 1 {
                return Err(DriftError::EndPieceNotAffine { index, degree });
            }
        }
        Ok(DriftSpec {
            breakpoints,
            pieces,
            point_values,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Polynomial] {
        &self.pieces
    }

    pub fn point_values(&self) -> &[Option<f64>] {
        &self.point_values
    }

    /// Evaluate at `x`. On the open interval between breakpoints this is the
    /// piece value; at a breakpoint it is the stored point value when
    /// present, otherwise the right limit.
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&x).expect("finite breakpoints"))
        {
            Ok(i) => self.point_values[i].unwrap_or_else(|| self.pieces[i + 1].eval(x)),
            Err(i) => self.pieces[i].eval(x),
        }
    }

    /// One-sided limits `(mu(xi_i-), mu(xi_i+))` at breakpoint `i` (0-based),
    /// obtained by evaluating the adjacent polynomial pieces at the point.
    pub fn one_sided_limits(&self, i: usize) -> Result<(f64, f64), DriftError> {
        if i >= self.breakpoints.len() {
            return Err(DriftError::BreakpointIndex {
                index: i,
                breakpoints: self.breakpoints.len(),
            });
        }
        let xi = self.breakpoints[i];
        Ok((self.pieces[i].eval(xi), self.pieces[i + 1].eval(xi)))
    }

    /// Split into a globally Lipschitz part, heaviside amplitudes and
    /// single-point corrections. Telescoping the cumulative jump out of each
    /// piece makes the continuous part match one-sided limits everywhere.
    pub fn decompose(&self) -> Decomposition {
        let k = self.breakpoints.len();
        let mut step_jumps = Vec::with_capacity(k);
        let mut point_jumps = Vec::with_capacity(k);
        let mut cont_pieces = Vec::with_capacity(k + 1);
        let mut cont_values = Vec::with_capacity(k);
        let mut cumulative = 0.0;
        cont_pieces.push(self.pieces[0].clone());
        for i in 0..k {
            let xi = self.breakpoints[i];
            let (left, right) = self.one_sided_limits(i).expect("index in range");
            let alpha = right - left;
            let gamma = self.eval(xi) - right;
            step_jumps.push((xi, alpha));
            point_jumps.push((xi, gamma));
            // Value of the continuous part at xi: the shared one-sided limit.
            cont_values.push(Some(self.pieces[i].eval(xi) - cumulative));
            cumulative += alpha;
            cont_pieces.push(self.pieces[i + 1].plus_constant(-cumulative));
        }
        let cont = DriftSpec::with_point_values(self.breakpoints.clone(), cont_pieces, cont_values)
            .expect("continuous part inherits a valid shape");
        Decomposition {
            cont,
            step_jumps,
            point_jumps,
        }
    }

    /// Structural report: piecewise regularity holds by construction; a
    /// genuine jump exists iff some heaviside amplitude is nonzero.
    pub fn validate(&self) -> ValidationReport {
        let discontinuities: Vec<Discontinuity> = (0..self.breakpoints.len())
            .filter_map(|i| {
                let (left, right) = self.one_sided_limits(i).expect("index in range");
                let jump = right - left;
                (jump != 0.0).then_some(Discontinuity {
                    location: self.breakpoints[i],
                    left_limit: left,
                    right_limit: right,
                    jump,
                })
            })
            .collect();
        ValidationReport {
            piecewise_lipschitz: true,
            piecewise_smooth: true,
            has_genuine_jump: !discontinuities.is_empty(),
            discontinuities,
        }
    }

    /// A constant `K` with `|mu(x)| <= K (1 + |x|)` for all real `x`.
    ///
    /// The affine end pieces `a + b x` satisfy `|a + b x| <= max(|a|,|b|)(1+|x|)`
    /// everywhere, and each bounded interior piece is dominated by its
    /// coefficient-magnitude bound over the breakpoint hull, so the returned
    /// constant is a proven bound, not a sampled one.
    pub fn linear_growth_constant(&self) -> f64 {
        let k = self.breakpoints.len();
        let first = &self.pieces[0];
        let last = &self.pieces[k];
        let affine_k = |p: &Polynomial| {
            let c = p.coeffs();
            let a = c.first().copied().unwrap_or(0.0).abs();
            let b = c.get(1).copied().unwrap_or(0.0).abs();
            a.max(b)
        };
        let mut bound: f64 = affine_k(first).max(affine_k(last));
        if k > 0 {
            let hull = self.breakpoints[0].abs().max(self.breakpoints[k - 1].abs());
            for piece in &self.pieces[1..k] {
                bound = bound.max(piece.magnitude_bound(hull));
            }
            for i in 0..k {
                let (left, right) = self.one_sided_limits(i).expect("index in range");
                bound = bound
                    .max(left.abs())
                    .max(right.abs())
                    .max(self.eval(self.breakpoints[i]).abs());
            }
        }
        bound
    }

    /// Piecewise derivative; at breakpoints the right-hand derivative is
    /// reported (single points do not affect integrals or trajectories).
    pub fn derivative_piecewise(&self) -> DriftSpec {
        let pieces = self.pieces.iter().map(Polynomial::derivative).collect();
        DriftSpec::new(self.breakpoints.clone(), pieces)
            .expect("derivative of a valid spec stays valid")
    }

    pub fn to_config(&self) -> DriftConfig {
        DriftConfig {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|p| p.coeffs().to_vec()).collect(),
            point_values: self
                .point_values
                .iter()
                .enumerate()
                .filter_map(|(index, v)| v.map(|value| PointValueEntry { index, value }))
                .collect(),
        }
    }

    pub fn from_config(cfg: &DriftConfig) -> Result<Self, DriftError> {
        let k = cfg.breakpoints.len();
        let mut point_values = vec![None; k];
        for entry in &cfg.point_values {
            if entry.index >= k {
                return Err(DriftError::PointValueIndex {
                    index: entry.index,
                    breakpoints: k,
                });
            }
            point_values[entry.index] = Some(entry.value);
        }
        DriftSpec::with_point_values(
            cfg.breakpoints.clone(),
            cfg.pieces.iter().cloned().map(Polynomial::new).collect(),
            point_values,
        )
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_config()).expect("drift config serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, DriftError> {
        let cfg: DriftConfig = toml::from_str(s).map_err(|e| DriftError::Parse(e.to_string()))?;
        Self::from_config(&cfg)
    }
}

/// Serialized form of a drift spec. Coefficients are written with shortest
/// round-trip decimal formatting, so configs reproduce the exact binary
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub point_values: Vec<PointValueEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointValueEntry {
    pub index: usize,
    pub value: f64,
}

/// `mu = cont + sum alpha_i 1_[xi_i, inf) + sum gamma_i 1_{xi_i}`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub cont: DriftSpec,
    pub step_jumps: Vec<(f64, f64)>,
    pub point_jumps: Vec<(f64, f64)>,
}

impl Decomposition {
    /// Reassemble the original drift value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.cont.eval(x);
        for &(xi, alpha) in &self.step_jumps {
            if x >= xi {
                v += alpha;
            }
        }
        for &(xi, gamma) in &self.point_jumps {
            if x == xi {
                v += gamma;
            }
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Lipschitz on every inter-breakpoint interval (structural).
    pub piecewise_lipschitz: bool,
    /// Differentiable with Lipschitz derivative on every interval (structural).
    pub piecewise_smooth: bool,
    /// Some breakpoint carries a genuine jump.
    pub has_genuine_jump: bool,
    pub discontinuities: Vec<Discontinuity>,
}

#[derive(Debug, Clone, Copy)]
pub struct Discontinuity {
    pub location: f64,
    pub left_limit: f64,
    pub right_limit: f64,
    pub jump: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `1_[0, inf)`.
    fn step() -> DriftSpec {
        DriftSpec::new(
            vec![0.0],
            vec![Polynomial::zero(), Polynomial::constant(1.0)],
        )
        .unwrap()
    }

    /// `2x - 3 * 1_[0, inf)`.
    fn affine_step() -> DriftSpec {
        DriftSpec::new(
            vec![0.0],
            vec![Polynomial::affine(0.0, 2.0), Polynomial::affine(-3.0, 2.0)],
        )
        .unwrap()
    }

    /// Deterministic quasi-uniform sample of [lo, hi] plus the breakpoints.
    fn dense_sample(spec: &DriftSpec, lo: f64, hi: f64, count: usize) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..count)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
            .collect();
        xs.extend_from_slice(spec.breakpoints());
        xs
    }

    #[test]
    fn eval_step_examples() {
        let mu = step();
        assert_eq!(mu.eval(-1.0), 0.0);
        assert_eq!(mu.eval(0.0), 1.0);
        assert_eq!(affine_step().eval(1.0), -1.0);
    }

    #[test]
    fn eval_honors_point_value() {
        let mu = DriftSpec::with_point_values(
            vec![0.0],
            vec![Polynomial::zero(), Polynomial::constant(1.0)],
            vec![Some(7.0)],
        )
        .unwrap();
        assert_eq!(mu.eval(0.0), 7.0);
        assert_eq!(mu.eval(1e-12), 1.0);
    }

    #[test]
    fn eval_negative_zero_hits_breakpoint() {
        assert_eq!(step().eval(-0.0), 1.0);
    }

    #[test]
    fn one_sided_limits_examples() {
        assert_eq!(step().one_sided_limits(0).unwrap(), (0.0, 1.0));
        assert_eq!(affine_step().one_sided_limits(0).unwrap(), (0.0, -3.0));
        // Matching pieces give an equal pair.
        let cont = DriftSpec::new(
            vec![1.0],
            vec![Polynomial::affine(0.0, 2.0), Polynomial::affine(0.0, 2.0)],
        )
        .unwrap();
        let (l, r) = cont.one_sided_limits(0).unwrap();
        assert_eq!(l, r);
        assert!(step().one_sided_limits(1).is_err());
    }

    #[test]
    fn one_sided_limits_match_nearby_eval() {
        let mu = affine_step();
        let (left, right) = mu.one_sided_limits(0).unwrap();
        let lipschitz = 2.0;
        for h in [1e-3, 1e-6, 1e-9] {
            assert!((mu.eval(-h) - left).abs() <= lipschitz * h + 1e-12);
            assert!((mu.eval(h) - right).abs() <= lipschitz * h + 1e-12);
        }
    }

    #[test]
    fn decompose_step() {
        let d = step().decompose();
        assert_eq!(d.step_jumps, vec![(0.0, 1.0)]);
        assert_eq!(d.point_jumps, vec![(0.0, 0.0)]);
        for x in [-3.0, -0.1, 0.0, 0.1, 5.0] {
            assert_eq!(d.cont.eval(x), 0.0);
        }
    }

    #[test]
    fn decompose_lipschitz_is_identity() {
        let mu = DriftSpec::lipschitz(Polynomial::affine(1.0, -2.0)).unwrap();
        let d = mu.decompose();
        assert!(d.step_jumps.is_empty());
        assert!(d.point_jumps.is_empty());
        assert_eq!(d.cont, mu);
    }

    #[test]
    fn decompose_affine_step() {
        let mu = affine_step();
        let d = mu.decompose();
        assert_eq!(d.step_jumps, vec![(0.0, -3.0)]);
        assert_eq!(d.point_jumps, vec![(0.0, 0.0)]);
        for x in dense_sample(&mu, -50.0, 50.0, 10_000) {
            assert!((d.cont.eval(x) - 2.0 * x).abs() <= 1e-12);
            assert!((d.eval(x) - mu.eval(x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn reconstruction_battery() {
        let battery = vec![
            DriftSpec::lipschitz(Polynomial::affine(0.3, -1.0)).unwrap(),
            step(),
            affine_step(),
            DriftSpec::new(
                vec![-1.0, 1.0],
                vec![
                    Polynomial::affine(-1.0, 0.5),
                    Polynomial::new(vec![0.0, 0.0, 1.0]),
                    Polynomial::affine(2.0, -1.0),
                ],
            )
            .unwrap(),
            DriftSpec::with_point_values(
                vec![-2.0, 0.5, 3.0],
                vec![
                    Polynomial::constant(1.0),
                    Polynomial::new(vec![0.5, 1.0, -0.25]),
                    Polynomial::affine(-1.0, 0.0),
                    Polynomial::affine(4.0, 0.5),
                ],
                vec![None, Some(9.0), None],
            )
            .unwrap(),
        ];
        for mu in &battery {
            let d = mu.decompose();
            for x in dense_sample(mu, -50.0, 50.0, 10_000) {
                let err = (d.eval(x) - mu.eval(x)).abs();
                assert!(err <= 1e-12, "reconstruction error {err} at x={x}");
            }
        }
    }

    #[test]
    fn validate_examples() {
        let r = step().validate();
        assert!(r.piecewise_lipschitz && r.piecewise_smooth && r.has_genuine_jump);
        assert_eq!(r.discontinuities.len(), 1);
        assert_eq!(r.discontinuities[0].jump, 1.0);

        let r = DriftSpec::lipschitz(Polynomial::affine(0.0, 1.0))
            .unwrap()
            .validate();
        assert!(!r.has_genuine_jump);

        // Removable breakpoint: both limits equal.
        let removable = DriftSpec::new(
            vec![0.0],
            vec![Polynomial::affine(0.0, 1.0), Polynomial::affine(0.0, 1.0)],
        )
        .unwrap();
        assert!(!removable.validate().has_genuine_jump);
    }

    #[test]
    fn validate_flags_jump_iff_decompose_has_amplitude() {
        for mu in [step(), affine_step()] {
            let max_alpha = mu
                .decompose()
                .step_jumps
                .iter()
                .map(|(_, a)| a.abs())
                .fold(0.0, f64::max);
            assert_eq!(mu.validate().has_genuine_jump, max_alpha > 0.0);
        }
    }

    #[test]
    fn linear_growth_examples() {
        let k = step().linear_growth_constant();
        assert!((1.0..=2.0).contains(&k), "k = {k}");
        let mu = DriftSpec::lipschitz(Polynomial::affine(0.0, 2.0)).unwrap();
        assert_eq!(mu.linear_growth_constant(), 2.0);
        let zero = DriftSpec::lipschitz(Polynomial::zero()).unwrap();
        assert_eq!(zero.linear_growth_constant(), 0.0);
    }

    #[test]
    fn linear_growth_bound_holds_on_dense_sample() {
        for mu in [step(), affine_step()] {
            let k = mu.linear_growth_constant();
            for x in dense_sample(&mu, -100.0, 100.0, 20_000) {
                assert!(mu.eval(x).abs() <= k * (1.0 + x.abs()) + 1e-12);
            }
            // Tail check: beyond the hull the affine coefficient bound applies.
            for p in [&mu.pieces()[0], &mu.pieces()[mu.pieces().len() - 1]] {
                let c = p.coeffs();
                let a = c.first().copied().unwrap_or(0.0).abs();
                let b = c.get(1).copied().unwrap_or(0.0).abs();
                assert!(k >= a.max(b));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            DriftSpec::new(vec![0.0], vec![Polynomial::zero()]),
            Err(DriftError::PieceCountMismatch { .. })
        ));
        assert!(matches!(
            DriftSpec::new(
                vec![0.0, 0.0 + 1e-10],
                vec![Polynomial::zero(), Polynomial::zero(), Polynomial::zero()],
            ),
            Err(DriftError::BreakpointsNotIncreasing { .. })
        ));
        assert!(matches!(
            DriftSpec::lipschitz(Polynomial::new(vec![0.0, 0.0, 1.0])),
            Err(DriftError::EndPieceNotAffine { .. })
        ));
        assert!(matches!(
            DriftSpec::lipschitz(Polynomial::constant(f64::NAN)),
            Err(DriftError::NonFinite)
        ));
        let too_many: Vec<f64> = (0..65).map(|i| i as f64).collect();
        let pieces = vec![Polynomial::zero(); 66];
        assert!(matches!(
            DriftSpec::new(too_many, pieces),
            Err(DriftError::TooManyBreakpoints { .. })
        ));
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let mu = DriftSpec::with_point_values(
            vec![-1.5, 0.1],
            vec![
                Polynomial::affine(0.1 + 0.2, -1.0 / 3.0),
                Polynomial::new(vec![1e-300, 2.5e17, 0.1]),
                Polynomial::affine(7.0, 0.0),
            ],
            vec![None, Some(0.3)],
        )
        .unwrap();
        let text = mu.to_toml_string();
        let back = DriftSpec::from_toml_str(&text).unwrap();
        assert_eq!(mu, back);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let text = "breakpoints = []\npieces = [[0.0]]\nextra = 1\n";
        assert!(DriftSpec::from_toml_str(text).is_err());
    }

    proptest! {
        #[test]
        fn toml_round_trip_arbitrary_coeffs(
            a in proptest::num::f64::NORMAL,
            b in proptest::num::f64::NORMAL,
            c in proptest::num::f64::NORMAL,
            xi in -1e3f64..1e3f64,
        ) {
            let mu = DriftSpec::new(
                vec![xi, xi + 2.0e3],
                vec![
                    Polynomial::affine(a, b),
                    Polynomial::new(vec![c, a, b]),
                    Polynomial::affine(c, a),
                ],
            ).unwrap();
            let back = DriftSpec::from_toml_str(&mu.to_toml_string()).unwrap();
            prop_assert_eq!(mu, back);
        }

        #[test]
        fn reconstruction_property(x in -50.0f64..50.0f64, shift in -2.0f64..2.0f64) {
            let mu = DriftSpec::new(
                vec![shift, shift + 3.0],
                vec![
                    Polynomial::affine(1.0, -0.5),
                    Polynomial::new(vec![-0.25, 0.0, 0.5]),
                    Polynomial::affine(0.75, 0.25),
                ],
            ).unwrap();
            let d = mu.decompose();
            prop_assert!((d.eval(x) - mu.eval(x)).abs() <= 1e-12);
        }
    }
}
