//! The `qspin` command line: `simulate`, `ensemble`, `lyapunov` and
//! `validate`, writing CSV data and a JSON summary with a manifest block into
//! the output directory.
//!
//! Exit codes: 0 success, 1 validation failed, 2 configuration or usage
//! error, 3 simulated run ended unsettled, 4 numerical failure, 5 empty
//! Lyapunov fit window.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::chaos::{divergence_series, fit_lyapunov, DivergenceSeries, LyapunovEstimate};
use crate::config::{load_config, RootConfig};
use crate::ensemble::{run_sweep, SweepResult};
use crate::error::{invalid, Error};
use crate::trajectory::{simulate, Outcome, TrajectoryRecord};
use crate::validation::{check_sweep, Check, Thresholds};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_UNSETTLED: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_FIT_WINDOW: u8 = 5;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const DIVERGENCE_CSV: &str = "divergence.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const REPORT_TXT: &str = "report.txt";

pub const SWEEP_HEADER: &str =
    "mean_theta,n_up,n_down,n_unsettled,fraction_up,predicted_up,residual";
pub const DIVERGENCE_HEADER: &str = "t,ln_separation";

#[derive(Debug, Parser)]
#[command(
    name = "qspin",
    version,
    about = "Semi-classical multi-body spin collapse simulator"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; omitted blocks and fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed override: trial seed for `simulate`, master seed for sweeps,
    /// initial-state seed for `lyapunov`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and record it.
    Simulate {
        /// Mean initial angle in radians, within [0, π].
        #[arg(long)]
        mean_theta: f64,
    },
    /// Sweep initial angles and tally collapse outcomes.
    Ensemble {
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Measure trajectory divergence and fit the Lyapunov exponent.
    Lyapunov {
        #[arg(long)]
        mean_theta: Option<f64>,
        /// Fit an existing `t,ln_separation` CSV instead of simulating.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Run the sweep and check it against cos²(θ/2).
    Validate {
        /// Maximum tolerated RMS residual.
        #[arg(long, default_value_t = 0.07)]
        threshold: f64,
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: Vec<String>,
    pub config: RootConfig,
    pub version: String,
    pub started_at: String,
    pub elapsed_seconds: f64,
}

struct Session {
    argv: Vec<String>,
    config: RootConfig,
    started_at: String,
    clock: Instant,
}

impl Session {
    fn manifest(&self) -> Manifest {
        Manifest {
            command: self.argv.clone(),
            config: self.config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at.clone(),
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig { .. } | Error::SizeMismatch { .. } => EXIT_CONFIG,
        Error::EmptyFitWindow(_) | Error::Saturated => EXIT_FIT_WINDOW,
        _ => EXIT_NUMERICAL,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| invalid(&path.display().to_string(), e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("summary is always serializable");
    text.push('\n');
    write_file(path, &text)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trajectory samples as CSV, one row per sample, full precision.
pub fn trajectory_csv(record: &TrajectoryRecord, n_sites: usize) -> String {
    let mut out = String::from("t");
    for i in 0..n_sites {
        write!(out, ",theta_{i}").unwrap();
    }
    for i in 0..n_sites {
        write!(out, ",omega_{i}").unwrap();
    }
    out.push_str(",energy\n");
    for s in &record.samples {
        write!(out, "{}", s.t).unwrap();
        for v in s.theta.iter().chain(&s.omega) {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{}", s.energy).unwrap();
    }
    out
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for s in &result.stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.mean_theta,
            s.n_up,
            s.n_down,
            s.n_unsettled,
            opt_num(s.fraction_up),
            s.predicted,
            opt_num(s.residual)
        )
        .unwrap();
    }
    out
}

pub fn divergence_csv(points: &[(f64, f64)]) -> String {
    let mut out = format!("{DIVERGENCE_HEADER}\n");
    for (t, v) in points {
        writeln!(out, "{t},{v}").unwrap();
    }
    out
}

/// Reads a `t,ln_separation` CSV.
pub fn parse_divergence_csv(text: &str) -> Result<DivergenceSeries, Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(str::trim) {
        Some(DIVERGENCE_HEADER) => {}
        other => {
            return Err(invalid(
                "series",
                format!("expected header `{DIVERGENCE_HEADER}`, found {other:?}"),
            ))
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',').map(|f| f.trim().parse::<f64>());
        match (fields.next(), fields.next(), fields.next()) {
            (Some(Ok(t)), Some(Ok(v)), None) => points.push((t, v)),
            _ => {
                return Err(invalid(
                    "series",
                    format!("malformed row {}: {line}", i + 2),
                ))
            }
        }
    }
    DivergenceSeries::from_points(points)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    outcome: Outcome,
    settle_time: Option<f64>,
    final_time: f64,
    mean_theta: f64,
    seed: u64,
    accepted_steps: u64,
    rejected_steps: u64,
    manifest: &'a Manifest,
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    rms_residual: Option<f64>,
    n_unsettled: usize,
    total_trials: usize,
    manifest: &'a Manifest,
}

#[derive(Serialize)]
struct LyapunovSummary<'a> {
    lambda: f64,
    r_squared: f64,
    saturated_at: Option<f64>,
    n_points: usize,
    fit_t_start: f64,
    fit_t_end: f64,
    manifest: &'a Manifest,
}

#[derive(Serialize)]
struct ValidateSummary<'a> {
    passed: bool,
    rms_residual: Option<f64>,
    checks: &'a [Check],
    manifest: &'a Manifest,
}

fn cmd_simulate(session: &Session, out: &Path, mean_theta: f64, seed: u64) -> Result<u8, Error> {
    if !(0.0..=std::f64::consts::PI).contains(&mean_theta) {
        return Err(invalid("mean_theta", "must lie in [0, π]"));
    }
    let cfg = &session.config;
    let record = simulate(
        mean_theta,
        seed,
        &cfg.model,
        &cfg.run,
        &cfg.integrator,
        true,
    )?;
    write_file(
        &out.join(TRAJECTORY_CSV),
        &trajectory_csv(&record, cfg.model.n_sites()),
    )?;
    let manifest = session.manifest();
    write_json(
        &out.join(SUMMARY_JSON),
        &SimulateSummary {
            outcome: record.outcome,
            settle_time: record.settle_time,
            final_time: record.final_time,
            mean_theta,
            seed,
            accepted_steps: record.stats.accepted_steps,
            rejected_steps: record.stats.rejected_steps,
            manifest: &manifest,
        },
    )?;
    println!(
        "outcome {} (settled at {:?})",
        record.outcome, record.settle_time
    );
    Ok(match record.outcome {
        Outcome::Unsettled => EXIT_UNSETTLED,
        _ => EXIT_OK,
    })
}

fn cmd_ensemble(session: &Session, out: &Path) -> Result<u8, Error> {
    let cfg = &session.config;
    let result = run_sweep(&cfg.sweep, &cfg.model, &cfg.run, &cfg.integrator)?;
    write_file(&out.join(SWEEP_CSV), &sweep_csv(&result))?;
    let manifest = session.manifest();
    write_json(
        &out.join(SUMMARY_JSON),
        &EnsembleSummary {
            rms_residual: result.rms_residual,
            n_unsettled: result.total_unsettled(),
            total_trials: result.total_trials(),
            manifest: &manifest,
        },
    )?;
    println!(
        "{} trials, rms residual {:?}, {} unsettled",
        result.total_trials(),
        result.rms_residual,
        result.total_unsettled()
    );
    Ok(EXIT_OK)
}

fn cmd_lyapunov(session: &Session, out: &Path, series_path: Option<&Path>) -> Result<u8, Error> {
    let cfg = &session.config;
    let series = match series_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
            parse_divergence_csv(&text)?
        }
        None => divergence_series(
            cfg.chaos.mean_theta,
            cfg.chaos.seed,
            &cfg.model,
            &cfg.chaos,
            &cfg.run,
            &cfg.integrator,
        )?,
    };
    write_file(&out.join(DIVERGENCE_CSV), &divergence_csv(&series.points))?;
    let est: LyapunovEstimate = fit_lyapunov(&series, &cfg.chaos)?;
    let manifest = session.manifest();
    write_json(
        &out.join(SUMMARY_JSON),
        &LyapunovSummary {
            lambda: est.lambda,
            r_squared: est.r_squared,
            saturated_at: est.saturated_at,
            n_points: est.n_points,
            fit_t_start: cfg.chaos.fit_t_start,
            fit_t_end: cfg.chaos.fit_t_end,
            manifest: &manifest,
        },
    )?;
    println!("lambda {} (r^2 {})", est.lambda, est.r_squared);
    Ok(EXIT_OK)
}

/// Human-readable validation report.
pub fn validation_report(result: &SweepResult, checks: &[Check]) -> String {
    let mut out = format!(
        "sweep: {} angles x {} trials ({} total), {:.1} s\n",
        result.sweep.n_angles,
        result.sweep.trials_per_angle,
        result.total_trials(),
        result.wall_seconds
    );
    for s in &result.stats {
        writeln!(
            out,
            "  theta {:.4}  up {:>5}  down {:>5}  unsettled {:>5}  fraction {:>8}  predicted {:.4}",
            s.mean_theta,
            s.n_up,
            s.n_down,
            s.n_unsettled,
            s.fraction_up.map_or("-".to_string(), |f| format!("{f:.4}")),
            s.predicted
        )
        .unwrap();
    }
    for c in checks {
        writeln!(out, "{c}").unwrap();
    }
    let passed = checks.iter().all(|c| c.passed);
    writeln!(
        out,
        "{}",
        if passed {
            "VALIDATION PASSED"
        } else {
            "VALIDATION FAILED"
        }
    )
    .unwrap();
    out
}

fn cmd_validate(session: &Session, out: &Path, threshold: f64) -> Result<u8, Error> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(invalid("threshold", "must be >= 0"));
    }
    let cfg = &session.config;
    let result = run_sweep(&cfg.sweep, &cfg.model, &cfg.run, &cfg.integrator)?;
    let thresholds = Thresholds {
        max_rms_residual: threshold,
        ..Thresholds::default()
    };
    let checks = check_sweep(&result, &thresholds);
    let passed = checks.iter().all(|c| c.passed);
    let report = validation_report(&result, &checks);
    print!("{report}");
    write_file(&out.join(REPORT_TXT), &report)?;
    write_file(&out.join(SWEEP_CSV), &sweep_csv(&result))?;
    let manifest = session.manifest();
    write_json(
        &out.join(SUMMARY_JSON),
        &ValidateSummary {
            passed,
            rms_residual: result.rms_residual,
            checks: &checks,
            manifest: &manifest,
        },
    )?;
    Ok(if passed {
        EXIT_OK
    } else {
        EXIT_VALIDATION_FAILED
    })
}

fn resolve_config(common: &CommonArgs, command: &Command) -> Result<RootConfig, Error> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => RootConfig::default(),
    };
    match command {
        Command::Simulate { .. } => {}
        Command::Ensemble { parallelism } | Command::Validate { parallelism, .. } => {
            if let Some(p) = parallelism {
                config.sweep.parallelism = *p;
            }
            if let Some(seed) = common.seed {
                config.sweep.base_seed = seed;
            }
        }
        Command::Lyapunov { mean_theta, .. } => {
            if let Some(m) = mean_theta {
                config.chaos.mean_theta = *m;
            }
            if let Some(seed) = common.seed {
                config.chaos.seed = seed;
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Parses `args` (including the program name), runs the command and returns
/// its exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();

    let config = match resolve_config(&cli.common, &cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let out = cli.common.out.as_path();
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    let session = Session {
        argv: args
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        config,
        started_at,
        clock,
    };

    let result = match &cli.command {
        Command::Simulate { mean_theta } => {
            cmd_simulate(&session, out, *mean_theta, cli.common.seed.unwrap_or(0))
        }
        Command::Ensemble { .. } => cmd_ensemble(&session, out),
        Command::Lyapunov { series, .. } => cmd_lyapunov(&session, out, series.as_deref()),
        Command::Validate { threshold, .. } => cmd_validate(&session, out, *threshold),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn main_exit_code() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
