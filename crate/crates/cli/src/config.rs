//! Experiment configuration: a single strict TOML document. Unknown fields
//! are hard errors so archived configs stay unambiguous, and the seed is
//! mandatory (no wall-clock seeding) so every run is re-runnable bit for
//! bit.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pwlsde::{DriftConfig, DriftSpec, Scheme};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub drift: DriftConfig,
    #[serde(default)]
    pub run: Option<RunConfig>,
    #[serde(default)]
    pub table: Option<TableConfig>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub x0: f64,
    pub scheme: String,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub refine_factor: usize,
    pub p: f64,
    pub seed: u64,
    /// 0 means: take PWLSDE_WORKERS from the environment, else all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Accepted [low, high] band for the fitted decay exponent; violation
    /// makes the run exit nonzero.
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
}

/// Fully validated run parameters after applying CLI overrides.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub drift: DriftSpec,
    pub x0: f64,
    pub scheme: Scheme,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub refine_factor: usize,
    pub p: f64,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub slope_band: Option<[f64; 2]>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ConfigFile = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn drift_spec(&self) -> Result<DriftSpec> {
        DriftSpec::from_config(&self.drift).context("field [drift]")
    }

    pub fn resolve_run(
        &self,
        seed_override: Option<u64>,
        workers_override: Option<usize>,
        out_override: Option<PathBuf>,
    ) -> Result<ResolvedRun> {
        let drift = self.drift_spec()?;
        let Some(run) = &self.run else {
            bail!("config has no [run] section");
        };
        let scheme: Scheme = run.scheme.parse().context("field [run].scheme")?;
        if run.ns.is_empty() {
            bail!("[run].ns must list at least one grid size");
        }
        for &n in &run.ns {
            if !n.is_power_of_two() {
                bail!("[run].ns entries must be powers of 2 (got {n})");
            }
        }
        if run.reps < 2 {
            bail!("[run].reps must be at least 2 (got {})", run.reps);
        }
        if run.refine_factor < pwlsde::experiments::MIN_REFINE_FACTOR {
            bail!(
                "[run].refine_factor must be at least {} (got {})",
                pwlsde::experiments::MIN_REFINE_FACTOR,
                run.refine_factor
            );
        }
        if !(run.p >= 1.0) {
            bail!("[run].p must satisfy p >= 1 (got {})", run.p);
        }
        if let Some([lo, hi]) = run.slope_band {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                bail!("[run].slope_band must be a finite [low, high] pair");
            }
        }
        let workers = workers_override
            .or((run.workers > 0).then_some(run.workers))
            .or_else(workers_from_env)
            .unwrap_or(0);
        Ok(ResolvedRun {
            drift,
            x0: run.x0,
            scheme,
            ns: run.ns.clone(),
            reps: run.reps,
            refine_factor: run.refine_factor,
            p: run.p,
            seed: seed_override.unwrap_or(run.seed),
            workers,
            out: out_override.or_else(|| run.out.clone()),
            slope_band: run.slope_band,
        })
    }
}

fn workers_from_env() -> Option<usize> {
    std::env::var("PWLSDE_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [drift]
        breakpoints = [0.0]
        pieces = [[0.0], [1.0]]

        [run]
        x0 = 0.0
        scheme = "quasi-milstein"
        ns = [16, 32, 64, 128]
        reps = 100
        refine_factor = 64
        p = 1.0
        seed = 7
    "#;

    #[test]
    fn minimal_config_resolves() {
        let cfg: ConfigFile = toml::from_str(MINIMAL).unwrap();
        let run = cfg.resolve_run(None, Some(2), None).unwrap();
        assert_eq!(run.seed, 7);
        assert_eq!(run.workers, 2);
        assert_eq!(run.scheme, Scheme::QuasiMilstein);
    }

    #[test]
    fn overrides_win() {
        let cfg: ConfigFile = toml::from_str(MINIMAL).unwrap();
        let run = cfg
            .resolve_run(Some(99), None, Some(PathBuf::from("x.csv")))
            .unwrap();
        assert_eq!(run.seed, 99);
        assert_eq!(run.out.unwrap(), PathBuf::from("x.csv"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = format!("{MINIMAL}\nmystery = 1\n");
        assert!(toml::from_str::<ConfigFile>(&bad).is_err());
        let bad = MINIMAL.replace("[run]", "[run]\nextra = true");
        assert!(toml::from_str::<ConfigFile>(&bad).is_err());
    }

    #[test]
    fn invalid_run_fields_rejected() {
        let cfg: ConfigFile =
            toml::from_str(&MINIMAL.replace("ns = [16, 32, 64, 128]", "ns = [48]")).unwrap();
        assert!(cfg.resolve_run(None, None, None).is_err());
        let cfg: ConfigFile =
            toml::from_str(&MINIMAL.replace("refine_factor = 64", "refine_factor = 8")).unwrap();
        assert!(cfg.resolve_run(None, None, None).is_err());
    }
}
