//! Monte Carlo estimation of strong errors and coupling distances, with
//! rate regression.
//!
//! Strong errors are measured against a common-path fine reference: each
//! replication samples one fine Brownian path, restricts it to the coarse
//! grid for the scheme under test and runs the reference on the full fine
//! path, so the comparison shares the driving noise. The coupling distance
//! runs the reference on both halves of a resampled-bridge pair; half of the
//! resulting L^p distance is a statistical lower bound on the error of any
//! method that only sees the coarse-grid Brownian values, which is what the
//! certificate reports.
//!
//! Replications are independent tasks fanned out over a worker pool. Every
//! replication derives its noise from counter-based streams keyed by the
//! master seed, per-replication values are collected in replication order
//! and reduced with compensated summation, so results are bit-identical for
//! any worker count.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::drift::{DriftError, DriftSpec};
use crate::paths::{couple, sample_brownian, PathError, TimeGrid};
use crate::rng::RngStream;
use crate::solvers::{
    euler_maruyama, quasi_milstein_transformed, reference_solution, Retention,
};
use crate::transform::{build_transform, TransformError};

/// Smallest reference refinement factor accepted for strong-error runs.
pub const MIN_REFINE_FACTOR: usize = 64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown scheme tag `{0}` (expected `euler` or `quasi-milstein`)")]
    UnknownScheme(String),
    #[error("need at least 2 replications (got {0})")]
    TooFewReps(usize),
    #[error("grid size must be a power of 2 (got {0})")]
    NotPowerOfTwo(usize),
    #[error("refinement factor {got} below minimum {min}")]
    RefineTooSmall { got: usize, min: usize },
    #[error("rate fit needs at least 4 ladder points (got {0})")]
    TooFewPoints(usize),
    #[error("rate fit needs distinct grid sizes (n = {0} repeats)")]
    DuplicatePoint(usize),
    #[error("rate fit needs strictly positive errors (point n = {n} has error {error})")]
    NonpositiveError { n: usize, error: f64 },
    #[error("L^p order must satisfy p >= 1 (got {0})")]
    BadOrder(f64),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Scheme selector for error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    QuasiMilstein,
}

impl FromStr for Scheme {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" | "euler-maruyama" => Ok(Scheme::Euler),
            "quasi-milstein" | "milstein" => Ok(Scheme::QuasiMilstein),
            other => Err(ExperimentError::UnknownScheme(other.to_string())),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Euler => write!(f, "euler"),
            Scheme::QuasiMilstein => write!(f, "quasi-milstein"),
        }
    }
}

/// Monte Carlo estimate of an L^p distance: `mean = (1/M sum |.|^p)^(1/p)`
/// with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub n: usize,
}

/// Least-squares fit of `log2(error)` against `log2(n)`, reported as a
/// positive decay exponent with a 95% confidence half-width from the
/// regression residuals.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_half_width: f64,
    pub points: Vec<(usize, ErrorEstimate)>,
}

/// Strong L^p error of `scheme` at grid size `n` against the common-path
/// fine reference (factor `refine_factor` finer). Fully determined by
/// `seed`; `workers = 0` uses all available cores.
#[allow(clippy::too_many_arguments)]
pub fn strong_error(
    scheme: Scheme,
    drift: &DriftSpec,
    x0: f64,
    n: usize,
    refine_factor: usize,
    p: f64,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<ErrorEstimate, ExperimentError> {
    check_common(n, p, reps)?;
    if refine_factor < MIN_REFINE_FACTOR {
        return Err(ExperimentError::RefineTooSmall {
            got: refine_factor,
            min: MIN_REFINE_FACTOR,
        });
    }
    let transform = build_transform(drift)?;
    let coarse = Arc::new(TimeGrid::equidistant(n));
    let fine = Arc::new(coarse.refine_uniform(refine_factor)?);
    let coarse_indices = fine.embed(&coarse)?;
    let drift = drift.clone();
    let values = run_replications(reps, workers, move |rep| {
        let stream = RngStream::new(seed, rep);
        let fine_path = sample_brownian(&fine, &stream);
        let reference = reference_solution(&transform, x0, &fine_path, Retention::Terminal);
        let coarse_path = fine_path.restrict(Arc::clone(&coarse), &coarse_indices);
        let approx = match scheme {
            Scheme::Euler => euler_maruyama(&drift, x0, &coarse_path, Retention::Terminal),
            Scheme::QuasiMilstein => {
                quasi_milstein_transformed(&transform, x0, &coarse_path, Retention::Terminal)
            }
        };
        abs_pow(approx.terminal - reference.terminal, p)
    });
    Ok(estimate_from_powers(p, n, &values))
}

/// L^p distance between the reference solutions driven by a fine path and
/// by its resampled-bridge partner, both started at `x0`. A factor-1
/// refinement makes the partner coincide with the path and the distance
/// vanish; rate experiments should keep the factor at
/// [`MIN_REFINE_FACTOR`] or above (the CLI enforces this).
#[allow(clippy::too_many_arguments)]
pub fn coupling_distance(
    drift: &DriftSpec,
    x0: f64,
    coarse: &TimeGrid,
    refine_factor: usize,
    p: f64,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<ErrorEstimate, ExperimentError> {
    let n = coarse.steps();
    check_common(n, p, reps)?;
    if refine_factor < 1 {
        return Err(ExperimentError::RefineTooSmall {
            got: refine_factor,
            min: 1,
        });
    }
    let transform = build_transform(drift)?;
    let coarse = Arc::new(coarse.clone());
    let fine = Arc::new(coarse.refine_uniform(refine_factor)?);
    let values = run_replications(reps, workers, move |rep| {
        let stream = RngStream::new(seed, rep);
        let fine_path = sample_brownian(&fine, &stream);
        let pair = couple(&fine_path, &coarse, &stream).expect("fine grid refines coarse");
        let x = reference_solution(&transform, x0, &pair.w, Retention::Terminal);
        let x_tilde = reference_solution(&transform, x0, &pair.w_tilde, Retention::Terminal);
        abs_pow(x.terminal - x_tilde.terminal, p)
    });
    Ok(estimate_from_powers(p, n, &values))
}

/// Half the estimated coupling distance: a statistical lower bound on the
/// L^p error of any measurable reconstruction from the coarse-grid Brownian
/// values.
pub fn lower_bound_certificate(est: &ErrorEstimate) -> f64 {
    est.mean / 2.0
}

/// Ordinary least squares of `log2(error)` on `log2(n)`.
pub fn fit_rate(points: &[(usize, ErrorEstimate)]) -> Result<RateFit, ExperimentError> {
    if points.len() < 4 {
        return Err(ExperimentError::TooFewPoints(points.len()));
    }
    for (i, (n, est)) in points.iter().enumerate() {
        if !n.is_power_of_two() {
            return Err(ExperimentError::NotPowerOfTwo(*n));
        }
        if points[..i].iter().any(|(m, _)| m == n) {
            return Err(ExperimentError::DuplicatePoint(*n));
        }
        if !(est.mean > 0.0) {
            return Err(ExperimentError::NonpositiveError {
                n: *n,
                error: est.mean,
            });
        }
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).log2()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.mean.log2()).collect();
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let b = sxy / sxx;
    let intercept = y_mean - b * x_mean;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + b * x);
            r * r
        })
        .sum();
    let dof = m - 2.0;
    let se_b = (ssr / dof / sxx).sqrt();
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let t_quantile = StudentsT::new(0.0, 1.0, dof)
        .expect("valid dof")
        .inverse_cdf(0.975);
    Ok(RateFit {
        slope: -b,
        intercept,
        ci_half_width: t_quantile * se_b,
        points: points.to_vec(),
    })
}

/// Strong-error estimates over a ladder of grid sizes. Each ladder point
/// uses an independent seed derived from `seed` and `n`.
#[allow(clippy::too_many_arguments)]
pub fn strong_error_ladder(
    scheme: Scheme,
    drift: &DriftSpec,
    x0: f64,
    ns: &[usize],
    refine_factor: usize,
    p: f64,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<(usize, ErrorEstimate)>, ExperimentError> {
    ns.iter()
        .map(|&n| {
            strong_error(
                scheme,
                drift,
                x0,
                n,
                refine_factor,
                p,
                reps,
                point_seed(seed, n),
                workers,
            )
            .map(|e| (n, e))
        })
        .collect()
}

/// Coupling-distance estimates over a ladder of equidistant grids.
#[allow(clippy::too_many_arguments)]
pub fn coupling_ladder(
    drift: &DriftSpec,
    x0: f64,
    ns: &[usize],
    refine_factor: usize,
    p: f64,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<(usize, ErrorEstimate)>, ExperimentError> {
    ns.iter()
        .map(|&n| {
            let coarse = TimeGrid::equidistant(n);
            coupling_distance(
                drift,
                x0,
                &coarse,
                refine_factor,
                p,
                reps,
                point_seed(seed, n),
                workers,
            )
            .map(|e| (n, e))
        })
        .collect()
}

/// CSV with one ladder row per line: `n,error,stderr`. Floats use shortest
/// round-trip formatting, so output is byte-stable.
pub fn rate_csv(points: &[(usize, ErrorEstimate)]) -> String {
    let mut s = String::from("n,error,stderr\n");
    for (n, est) in points {
        s.push_str(&format!("{},{},{}\n", n, est.mean, est.stderr));
    }
    s
}

/// One-line human summary of a fit.
pub fn fit_summary(fit: &RateFit) -> String {
    format!(
        "slope={:.4} ci_half_width={:.4} intercept={:.4} points={}",
        fit.slope,
        fit.ci_half_width,
        fit.intercept,
        fit.points.len()
    )
}

fn check_common(n: usize, p: f64, reps: usize) -> Result<(), ExperimentError> {
    if !n.is_power_of_two() {
        return Err(ExperimentError::NotPowerOfTwo(n));
    }
    if !(p >= 1.0) {
        return Err(ExperimentError::BadOrder(p));
    }
    if reps < 2 {
        return Err(ExperimentError::TooFewReps(reps));
    }
    Ok(())
}

fn point_seed(seed: u64, n: usize) -> u64 {
    // Distinct ladder points draw from unrelated replication families.
    let mut z = seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn abs_pow(v: f64, p: f64) -> f64 {
    let d = v.abs();
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn pth_root(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v
    } else if p == 2.0 {
        v.sqrt()
    } else {
        v.powf(1.0 / p)
    }
}

/// Evaluate replications in order. The map is parallel but collection is
/// index-ordered and the reduction below is sequential, so the result does
/// not depend on the worker count.
fn run_replications<F>(reps: usize, workers: usize, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    };
    if workers == 1 {
        (0..reps as u64).map(f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..reps as u64).into_par_iter().map(f).collect())
    }
}

/// Neumaier-compensated sum in slice order.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn estimate_from_powers(p: f64, n: usize, powers: &[f64]) -> ErrorEstimate {
    let m = powers.len() as f64;
    let moment = compensated_sum(powers) / m;
    let sq_dev: Vec<f64> = powers.iter().map(|v| (v - moment) * (v - moment)).collect();
    let variance = compensated_sum(&sq_dev) / (m - 1.0);
    let moment_se = (variance / m).sqrt();
    let mean = pth_root(moment, p);
    // Delta method: d/dm m^(1/p) = m^(1/p) / (p m); plain stderr for p = 1.
    let stderr = if moment > 0.0 {
        mean / (p * moment) * moment_se
    } else {
        0.0
    };
    ErrorEstimate {
        p,
        mean,
        stderr,
        reps: powers.len(),
        n,
    }
}
