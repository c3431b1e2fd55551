//! Command-line front end: validate drift configs, tabulate the transform,
//! simulate terminal values, and run the rate / coupling experiments.
//!
//! Output artifacts are CSV with shortest round-trip float formatting, so a
//! given config and seed reproduce byte-identical files for any worker
//! count. Exit codes: 0 success, 1 error, 2 configured slope band violated.

// Validation comparisons are negated (`!(p >= 1.0)`) so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::{ConfigFile, ResolvedRun};
use pwlsde::{
    build_transform, couple, coupled_pair_csv, coupling_ladder, euler_maruyama, fit_rate,
    lower_bound_certificate, quasi_milstein_transformed, rate_csv, sample_brownian,
    strong_error_ladder, write_binary_dump, RateFit, Retention, RngStream, Scheme, TimeGrid,
};

#[derive(Parser)]
#[command(
    name = "pwlsde",
    version,
    about = "Strong-approximation experiments for scalar SDEs with piecewise Lipschitz drift"
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count, overriding the config and PWLSDE_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path, overriding the config (default: CSV to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the drift config and report its jump structure.
    ValidateDrift,
    /// Tabulate x, G(x), G'(x), G''(x), G^-1(G(x)) as CSV.
    TransformTable,
    /// Run one scheme at fixed n and emit terminal values as CSV.
    Simulate {
        /// Also dump the first replication's Brownian path (little-endian
        /// f64 time/value pairs).
        #[arg(long)]
        dump_path: Option<PathBuf>,
    },
    /// Strong-error ladder against the fine reference, with slope fit.
    Rate,
    /// Coupling-distance ladder and lower-bound certificates, with slope fit.
    Couple {
        /// Also export one coupled pair (t, w, w_tilde) as CSV.
        #[arg(long)]
        dump_pair: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config_path = cli
        .config
        .as_deref()
        .context("--config PATH is required")?;
    let cfg = ConfigFile::load(config_path)?;
    match cli.command {
        Command::ValidateDrift => validate_drift(&cfg),
        Command::TransformTable => transform_table(&cfg, cli.out),
        Command::Simulate { dump_path } => {
            let run = cfg.resolve_run(cli.seed, cli.workers, cli.out)?;
            simulate(&cfg, &run, dump_path)
        }
        Command::Rate => {
            let run = cfg.resolve_run(cli.seed, cli.workers, cli.out)?;
            rate(&run)
        }
        Command::Couple { dump_pair } => {
            let run = cfg.resolve_run(cli.seed, cli.workers, cli.out)?;
            couple_cmd(&run, dump_pair)
        }
    }
}

fn validate_drift(cfg: &ConfigFile) -> Result<ExitCode> {
    let drift = cfg.drift_spec()?;
    let report = drift.validate();
    println!(
        "piecewise-Lipschitz pieces with Lipschitz derivatives: {}",
        verdict(report.piecewise_lipschitz && report.piecewise_smooth)
    );
    if report.has_genuine_jump {
        for d in &report.discontinuities {
            println!(
                "jump discontinuity: satisfied at xi={} (left={}, right={}, jump={})",
                d.location, d.left_limit, d.right_limit, d.jump
            );
        }
    } else {
        println!("jump discontinuity: none (drift is continuous)");
    }
    println!(
        "linear growth constant: {}",
        drift.linear_growth_constant()
    );
    Ok(ExitCode::SUCCESS)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "satisfied"
    } else {
        "violated"
    }
}

fn transform_table(cfg: &ConfigFile, out: Option<PathBuf>) -> Result<ExitCode> {
    let drift = cfg.drift_spec()?;
    let Some(table) = &cfg.table else {
        bail!("config has no [table] section");
    };
    if table.points < 2 || !(table.x_min < table.x_max) {
        bail!("[table] needs x_min < x_max and at least 2 points");
    }
    let t = build_transform(&drift)?;
    let mut csv = String::from("x,g,g_prime,g_second,g_inverse_round_trip\n");
    for i in 0..table.points {
        let x = table.x_min
            + (table.x_max - table.x_min) * i as f64 / (table.points - 1) as f64;
        let g = t.g_eval(x);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            x,
            g,
            t.g_prime(x),
            t.g_second(x),
            t.g_inverse(g)
        ));
    }
    emit(out.as_deref(), &csv)?;
    println!(
        "transform: half_width={} derivative_floor={}",
        t.half_width(),
        t.derivative_floor()
    );
    Ok(ExitCode::SUCCESS)
}

fn simulate(cfg: &ConfigFile, run: &ResolvedRun, dump_path: Option<PathBuf>) -> Result<ExitCode> {
    let Some(sim) = &cfg.sim else {
        bail!("config has no [sim] section");
    };
    if !sim.n.is_power_of_two() {
        bail!("[sim].n must be a power of 2 (got {})", sim.n);
    }
    let transform = build_transform(&run.drift)?;
    let grid = Arc::new(TimeGrid::equidistant(sim.n));
    let mut csv = String::from("rep,terminal\n");
    for rep in 0..sim.reps as u64 {
        let stream = RngStream::new(run.seed, rep);
        let path = sample_brownian(&grid, &stream);
        if rep == 0 {
            if let Some(dump) = &dump_path {
                let mut file = std::fs::File::create(dump)
                    .with_context(|| format!("creating {}", dump.display()))?;
                write_binary_dump(&path, &mut file)?;
            }
        }
        let terminal = match run.scheme {
            Scheme::Euler => euler_maruyama(&run.drift, run.x0, &path, Retention::Terminal),
            Scheme::QuasiMilstein => {
                quasi_milstein_transformed(&transform, run.x0, &path, Retention::Terminal)
            }
        }
        .terminal;
        csv.push_str(&format!("{rep},{terminal}\n"));
    }
    emit(run.out.as_deref(), &csv)?;
    println!(
        "simulate: scheme={} n={} reps={} seed={}",
        run.scheme, sim.n, sim.reps, run.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn rate(run: &ResolvedRun) -> Result<ExitCode> {
    let ladder = strong_error_ladder(
        run.scheme,
        &run.drift,
        run.x0,
        &run.ns,
        run.refine_factor,
        run.p,
        run.reps,
        run.seed,
        run.workers,
    )?;
    emit(run.out.as_deref(), &rate_csv(&ladder))?;
    let fit = fit_rate(&ladder).context("slope fit refused")?;
    println!("rate: scheme={} {}", run.scheme, pwlsde::experiments::fit_summary(&fit));
    Ok(band_verdict(run, &fit))
}

fn couple_cmd(run: &ResolvedRun, dump_pair: Option<PathBuf>) -> Result<ExitCode> {
    if let Some(dump) = &dump_pair {
        let coarse = TimeGrid::equidistant(run.ns[0]);
        let fine = Arc::new(coarse.refine_uniform(run.refine_factor)?);
        let stream = RngStream::new(run.seed, 0);
        let path = sample_brownian(&fine, &stream);
        let pair = couple(&path, &coarse, &stream)?;
        std::fs::write(dump, coupled_pair_csv(&pair))
            .with_context(|| format!("writing {}", dump.display()))?;
    }
    let ladder = coupling_ladder(
        &run.drift,
        run.x0,
        &run.ns,
        run.refine_factor,
        run.p,
        run.reps,
        run.seed,
        run.workers,
    )?;
    emit(run.out.as_deref(), &rate_csv(&ladder))?;
    for (n, est) in &ladder {
        println!(
            "couple: n={} distance={} certificate={}",
            n,
            est.mean,
            lower_bound_certificate(est)
        );
    }
    let fit = fit_rate(&ladder).context("slope fit refused")?;
    println!("couple: {}", pwlsde::experiments::fit_summary(&fit));
    Ok(band_verdict(run, &fit))
}

fn band_verdict(run: &ResolvedRun, fit: &RateFit) -> ExitCode {
    match run.slope_band {
        Some([lo, hi]) if !(lo..=hi).contains(&fit.slope) => {
            println!(
                "slope {} outside configured band [{lo}, {hi}]",
                fit.slope
            );
            ExitCode::from(2)
        }
        _ => ExitCode::SUCCESS,
    }
}

/// CSV goes to the output path when one is set, otherwise to stdout.
fn emit(out: Option<&std::path::Path>, csv: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}
