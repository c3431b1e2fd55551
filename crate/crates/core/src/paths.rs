//! Time grids, Brownian paths, bridge refinement and the resampled-bridge
//! coupling.
//!
//! The coupled partner of a path `W` observed on a coarse grid is
//!
//! ```text
//! W~ = Wbar + B~
//! ```
//!
//! where `Wbar` is the piecewise linear interpolation of `W` through the
//! coarse grid values and `B~` consists of freshly sampled Brownian bridges,
//! one per coarse interval, independent of `W`. `W` and `W~` agree exactly at
//! the coarse times and are conditionally independent in between, which makes
//! the pair the noise for lower-bound experiments.
//!
//! All sampling takes an explicit [`RngStream`], so replication fan-out
//! across workers is deterministic and lock-free.

use std::io::Write;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{RngStream, StreamPurpose};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("grid must contain at least the two endpoint times")]
    TooFewTimes,
    #[error("grid times must start at exactly 0 and end at exactly 1")]
    BadEndpoints,
    #[error("grid times must be strictly increasing (violated at index {index})")]
    NotIncreasing { index: usize },
    #[error("non-finite grid time")]
    NonFinite,
    #[error("time {t} outside [0, 1]")]
    TimeOutOfRange { t: f64 },
    #[error("fine grid does not contain coarse time {t}")]
    MissingCoarseTime { t: f64 },
    #[error("value count {values} does not match grid size {times}")]
    LengthMismatch { values: usize, times: usize },
    #[error("refinement factor must be at least 1")]
    BadRefinement,
}

/// Ordered partition `0 = t_0 < t_1 < ... < t_n = 1` of the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn from_times(times: Vec<f64>) -> Result<Self, PathError> {
        if times.len() < 2 {
            return Err(PathError::TooFewTimes);
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(PathError::NonFinite);
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(PathError::BadEndpoints);
        }
        for i in 1..times.len() {
            if !(times[i] > times[i - 1]) {
                return Err(PathError::NotIncreasing { index: i });
            }
        }
        Ok(TimeGrid { times })
    }

    /// `n` equal steps.
    pub fn equidistant(n: usize) -> Self {
        assert!(n >= 1, "need at least one step");
        let mut times: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        times.push(1.0);
        TimeGrid { times }
    }

    /// Split every interval into `factor` equal parts. Existing times are
    /// reused verbatim, so the result refines `self` exactly.
    pub fn refine_uniform(&self, factor: usize) -> Result<TimeGrid, PathError> {
        if factor < 1 {
            return Err(PathError::BadRefinement);
        }
        let mut times = Vec::with_capacity(self.steps() * factor + 1);
        for w in self.times.windows(2) {
            let (s, e) = (w[0], w[1]);
            times.push(s);
            for j in 1..factor {
                times.push(s + (e - s) * (j as f64 / factor as f64));
            }
        }
        times.push(1.0);
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `n` (one less than the number of times).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of `t` in the grid, matching exactly.
    pub fn position_of(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|u| u.partial_cmp(&t).expect("finite times"))
            .ok()
    }

    /// Positions of every time of `coarse` inside this grid; errors if some
    /// coarse time is absent.
    pub fn embed(&self, coarse: &TimeGrid) -> Result<Vec<usize>, PathError> {
        let mut indices = Vec::with_capacity(coarse.times.len());
        let mut j = 0;
        for &t in &coarse.times {
            while j < self.times.len() && self.times[j] < t {
                j += 1;
            }
            if j >= self.times.len() || self.times[j] != t {
                return Err(PathError::MissingCoarseTime { t });
            }
            indices.push(j);
            j += 1;
        }
        Ok(indices)
    }

    /// Whether the dyadic checkpoints `{2/n, 4/n, ..., 1}` for this grid's
    /// step count are all grid times and the step count is even. Proof-side
    /// grid condition; the coupling construction itself does not need it.
    pub fn satisfies_dyadic_checkpoints(&self) -> bool {
        let n = self.steps();
        if !n.is_multiple_of(2) {
            return false;
        }
        (1..=n / 2).all(|j| self.position_of(2.0 * j as f64 / n as f64).is_some())
    }
}

/// Brownian motion values on a grid, with `W_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl BrownianPath {
    pub fn from_values(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self, PathError> {
        if values.len() != grid.times().len() {
            return Err(PathError::LengthMismatch {
                values: values.len(),
                times: grid.times().len(),
            });
        }
        if values[0] != 0.0 {
            return Err(PathError::BadEndpoints);
        }
        Ok(BrownianPath { grid, values })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Piecewise linear interpolation `Wbar` at `t`:
    /// `(t - t_{i-1})/(t_i - t_{i-1}) W_{t_i} + (t_i - t)/(t_i - t_{i-1}) W_{t_{i-1}}`.
    /// Equals the stored value exactly when `t` is a grid time.
    pub fn interpolate(&self, t: f64) -> Result<f64, PathError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(PathError::TimeOutOfRange { t });
        }
        let times = self.grid.times();
        match times.binary_search_by(|u| u.partial_cmp(&t).expect("finite times")) {
            Ok(i) => Ok(self.values[i]),
            Err(i) => {
                let (s, e) = (times[i - 1], times[i]);
                let dt = e - s;
                Ok((t - s) / dt * self.values[i] + (e - t) / dt * self.values[i - 1])
            }
        }
    }

    /// Values at the given indices as a path on `coarse`.
    pub fn restrict(&self, coarse: Arc<TimeGrid>, indices: &[usize]) -> BrownianPath {
        debug_assert_eq!(indices.len(), coarse.times().len());
        let values = indices.iter().map(|&i| self.values[i]).collect();
        BrownianPath {
            grid: coarse,
            values,
        }
    }

    /// Conditionally sample the path on a finer grid. Values at the original
    /// times are kept bit for bit; each new time is drawn from the Brownian
    /// bridge law between its realized left neighbor and the next retained
    /// time, left to right (the order is fixed for reproducibility; any
    /// order has the same law). One stream per original interval.
    pub fn refine(&self, fine: Arc<TimeGrid>, stream: &RngStream) -> Result<BrownianPath, PathError> {
        let anchors = fine.embed(&self.grid)?;
        let mut values = vec![0.0; fine.times().len()];
        let times = fine.times();
        for (i, pair) in anchors.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            values[a] = self.values[i];
            if b > a + 1 {
                let mut rng = stream.rng(i as u64, StreamPurpose::Bridge);
                let end_t = times[b];
                let end_v = self.values[i + 1];
                let mut prev_t = times[a];
                let mut prev_v = self.values[i];
                for j in (a + 1)..b {
                    let t = times[j];
                    let frac = (end_t - t) / (end_t - prev_t);
                    let mean = end_v + (prev_v - end_v) * frac;
                    let var = (t - prev_t) * frac;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = mean + var.sqrt() * z;
                    values[j] = v;
                    prev_t = t;
                    prev_v = v;
                }
            }
        }
        let last = *anchors.last().unwrap();
        values[last] = *self.values.last().unwrap();
        BrownianPath::from_values(fine, values)
    }
}

/// Sample a Brownian path on `grid` from independent Gaussian increments
/// with variance `t_i - t_{i-1}`. A deterministic function of the stream.
pub fn sample_brownian(grid: &Arc<TimeGrid>, stream: &RngStream) -> BrownianPath {
    let times = grid.times();
    let mut rng = stream.rng(0, StreamPurpose::Increments);
    let mut values = Vec::with_capacity(times.len());
    values.push(0.0);
    let mut w = 0.0;
    for pair in times.windows(2) {
        let dt = pair[1] - pair[0];
        let z: f64 = StandardNormal.sample(&mut rng);
        w += dt.sqrt() * z;
        values.push(w);
    }
    BrownianPath {
        grid: Arc::clone(grid),
        values,
    }
}

/// A fine-grid path and its bridge-resampled partner. The two agree bitwise
/// at every coarse index; between coarse times the partner's bridge is an
/// independent resample.
#[derive(Debug, Clone)]
pub struct CoupledPathPair {
    pub w: BrownianPath,
    pub w_tilde: BrownianPath,
    pub coarse_indices: Vec<usize>,
}

/// Build the coupled partner of `path` with respect to `coarse`: linear
/// interpolation of the coarse values plus a fresh bridge per coarse
/// interval, drawn from the `FreshBridge` streams so that the resampled
/// bridges and the original path are independent.
pub fn couple(
    path: &BrownianPath,
    coarse: &TimeGrid,
    stream: &RngStream,
) -> Result<CoupledPathPair, PathError> {
    let coarse_indices = path.grid().embed(coarse)?;
    let times = path.grid().times();
    let mut values = vec![0.0; times.len()];
    for (i, pair) in coarse_indices.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        values[a] = path.values[a];
        if b > a + 1 {
            let mut rng = stream.rng(i as u64, StreamPurpose::FreshBridge);
            let (s, e) = (times[a], times[b]);
            let (ws, we) = (path.values[a], path.values[b]);
            let span = e - s;
            // Bridge pinned to zero at both interval ends.
            let mut prev_t = s;
            let mut prev_b = 0.0;
            for j in (a + 1)..b {
                let t = times[j];
                let frac = (e - t) / (e - prev_t);
                let mean = prev_b * frac;
                let var = (t - prev_t) * frac;
                let z: f64 = StandardNormal.sample(&mut rng);
                let b_val = mean + var.sqrt() * z;
                values[j] = (t - s) / span * we + (e - t) / span * ws + b_val;
                prev_t = t;
                prev_b = b_val;
            }
        }
    }
    let last = *coarse_indices.last().unwrap();
    values[last] = path.values[last];
    let w_tilde = BrownianPath {
        grid: Arc::clone(path.grid()),
        values,
    };
    Ok(CoupledPathPair {
        w: path.clone(),
        w_tilde,
        coarse_indices,
    })
}

/// Debug dump: `t, W_t` pairs as little-endian 64-bit floats.
pub fn write_binary_dump<W: Write>(path: &BrownianPath, out: &mut W) -> std::io::Result<()> {
    for (t, v) in path.grid().times().iter().zip(path.values()) {
        out.write_all(&t.to_le_bytes())?;
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// One coupled pair as CSV for plotting.
pub fn coupled_pair_csv(pair: &CoupledPathPair) -> String {
    let mut s = String::from("t,w,w_tilde\n");
    let times = pair.w.grid().times();
    for ((t, w), wt) in times.iter().zip(pair.w.values()).zip(pair.w_tilde.values()) {
        s.push_str(&format!("{t},{w},{wt}\n"));
    }
    s
}
