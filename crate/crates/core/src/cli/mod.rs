//! The `decaylab` command line: `classify`, `predict`, `simulate`, `verify` and `sweep`.
//!
//! Exit codes: 0 success, 2 usage, domain or schema error, 3 a verification check failed,
//! 4 the run blew up or the stepper broke down, 5 input/output error.
//!
//! Output directory, first match wins: `--out`, the config's `out_dir`, `$DECAYLAB_OUT`,
//! then `decaylab-out` in the working directory.

pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::evolve::{self, make_initial, EvolveError, RunResult, StepLog};
use crate::field::FieldError;
use crate::metrics::{lr_norm_values, truncate_g, MetricsError, NormSeries};
use crate::regime::{
    classify, decay_prediction, delta_threshold, l1_regime_exponents, ClassifyOptions, DecayPrediction,
    ProblemParams, Regime, RegimeError, RegimeReport,
};

pub use config::Config;
pub use verify::{verify_series, CheckEntry, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const OUT_ENV: &str = "DECAYLAB_OUT";
pub const DEFAULT_OUT: &str = "decaylab-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Field(FieldError::Csv(e)) | CliError::Metrics(MetricsError::Csv(e)) if e.is_io_error() => EXIT_IO,
            CliError::Evolve(EvolveError::Io { .. }) => EXIT_IO,
            CliError::Evolve(
                EvolveError::OverflowDetected { .. } | EvolveError::NonConvergence { .. } | EvolveError::StepTooSmall { .. },
            ) => EXIT_BLOWUP,
            _ => EXIT_USAGE,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Parser)]
#[command(name = "decaylab", version, about = "Decay, regularization and extinction for p-Laplacian problems with a gradient source")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regime and exponents for (p, q, N).
    Classify {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long = "N")]
        n: u32,
        /// Summability of the intended initial data.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Decay rate, envelope and extinction time or universal exponent for a config.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Smallness level δ entering the rate; defaults to `‖G_k(u0)‖_σ^σ`.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Runs a scenario and writes its series, snapshots, metadata and report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Re-runs the configured checks on a stored series CSV.
    Verify {
        series: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Runs every point of the config's sweep axes in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("decaylab: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Classify { p, q, n, nu, json } => cmd_classify(p, q, n, nu, json, out),
        Command::Predict { config, delta, json } => cmd_predict(&Config::load(&config)?, delta, json, out),
        Command::Simulate { config, out: dir, seed, json } => {
            let mut cfg = Config::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = resolve_out(dir, &cfg);
            let outcome = simulate_into(&cfg, &dir)?;
            if json {
                emit(out, &to_json(&outcome))?;
            } else {
                emit(out, &outcome.summary())?;
            }
            Ok(outcome.exit_code())
        }
        Command::Verify { series, config, json } => cmd_verify(&series, &Config::load(&config)?, json, out),
        Command::Sweep { config, out: dir, seed, json } => {
            let mut cfg = Config::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = resolve_out(dir, &cfg);
            let outcomes = cmd_sweep(&cfg, &dir)?;
            if json {
                emit(out, &to_json(&outcomes))?;
            } else {
                for o in &outcomes {
                    emit(out, &o.summary())?;
                }
            }
            Ok(outcomes.iter().map(RunOutcome::exit_code).max().unwrap_or(EXIT_OK))
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

pub fn resolve_out(flag: Option<PathBuf>, config: &Config) -> PathBuf {
    flag.or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn cmd_classify(p: f64, q: f64, n: u32, nu: Option<f64>, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = ProblemParams::model(p, q, n, 1.0)?;
    let report = classify(
        &params,
        &ClassifyOptions {
            declared_nu: nu,
            ..Default::default()
        },
    );
    if json {
        emit(out, &to_json(&report))?;
    } else {
        emit(out, &render_regime(&report))?;
        if matches!(report.regime, Regime::SuperlinearL1 | Regime::CriticalL1) {
            if let Ok(l1) = l1_regime_exponents(p, q, n) {
                emit(out, &format!("{:<20}{:?}\n", "l1_exponents", l1))?;
            }
        }
    }
    Ok(if report.regime == Regime::OutOfRange { EXIT_USAGE } else { EXIT_OK })
}

fn render_regime(r: &RegimeReport) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| s.push_str(&format!("{k:<20}{v}\n"));
    line("regime", r.regime.to_string());
    line("p", r.p.to_string());
    line("q", r.q.to_string());
    line("N", r.dim_n.to_string());
    line("sigma", r.sigma.to_string());
    line("sigma_effective", r.sigma_effective.to_string());
    line("nu", r.nu.to_string());
    line("beta", r.beta.to_string());
    line("finite_energy", r.finite_energy.to_string());
    line("p_lower_threshold", r.p_lower_threshold.to_string());
    line("q_lower", r.q_lower.to_string());
    line("q_l1_threshold", r.q_l1_threshold.to_string());
    line("q_l2_threshold", r.q_l2_threshold.to_string());
    for w in &r.warnings {
        line("warning", w.clone());
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictOutput {
    pub regime: Regime,
    pub sigma: f64,
    pub k: f64,
    pub delta: f64,
    pub delta_threshold: f64,
    pub prediction: DecayPrediction,
    /// `(t, envelope)` at the config's first sample times after zero.
    pub envelope: Vec<(f64, f64)>,
}

pub fn cmd_predict(config: &Config, delta: Option<f64>, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = config.params()?;
    let scenario = config.scenario()?;
    let report = classify(
        &params,
        &ClassifyOptions {
            declared_nu: config.declared_nu,
            critical_omega: config.critical_omega,
            grid_dim: Some(scenario.grid.dim()),
        },
    );
    if !(report.regime.is_superlinear() || params.gamma == 0.0) {
        return Err(CliError::Usage(format!(
            "predict needs a superlinear regime or gamma = 0, got {}",
            report.regime
        )));
    }
    let sigma = scenario.sigma();
    let u0 = make_initial(&config.initial, &scenario.grid, config.seed)?;
    let k = config.k_levels.first().copied().unwrap_or(0.0);
    let g: Vec<f64> = u0.values.iter().map(|&z| truncate_g(z, k)).collect();
    let y0 = lr_norm_values(&g, scenario.grid.cell_volume(), sigma);
    let delta = delta.unwrap_or(y0.powf(sigma));
    let prediction = decay_prediction(&params, sigma, delta, y0)?;
    let times: Vec<f64> = scenario.sample_times().into_iter().filter(|&t| t > 0.0).collect();
    let stride = (times.len() / 10).max(1);
    let envelope = times
        .iter()
        .step_by(stride)
        .map(|&t| (t, prediction.sigma_norm_envelope(t)))
        .collect();
    let result = PredictOutput {
        regime: report.regime,
        sigma,
        k,
        delta,
        delta_threshold: delta_threshold(&params),
        prediction,
        envelope,
    };
    if json {
        emit(out, &to_json(&result))?;
    } else {
        let mut s = format!("regime              {}\nsigma               {sigma}\n", result.regime);
        s.push_str(&format!("k                   {k}\ny0                  {y0}\n"));
        s.push_str(&format!("lambda              {}\n", prediction.lambda_rate));
        s.push_str(&format!("gronwall_m          {}\n", prediction.gronwall_m));
        s.push_str(&format!("h0, h1              {}, {}\n", prediction.h0, prediction.h1));
        if let Some(t) = prediction.extinction_time {
            s.push_str(&format!("extinction_time     {t}\n"));
        }
        if let Some(e) = prediction.universal_exponent {
            s.push_str(&format!("universal_exponent  {e}\n"));
        }
        if prediction.exponential_case {
            s.push_str(&format!("exponential_rate    {}\n", prediction.lambda_rate / sigma));
        }
        for (t, v) in &result.envelope {
            s.push_str(&format!("envelope            t = {t:e}  {v:e}\n"));
        }
        emit(out, &s)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotRecord {
    pub file: String,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub config: Config,
    pub regime: RegimeReport,
    pub sigma: f64,
    pub labels: Vec<String>,
    pub samples: usize,
    pub snapshots: Vec<SnapshotRecord>,
    pub extinction: Option<f64>,
    pub blowup: Option<f64>,
    pub steps: StepLog,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub regime: Regime,
    pub extinction: Option<f64>,
    pub blowup: Option<f64>,
    pub report: Option<VerificationReport>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.blowup.is_some() {
            EXIT_BLOWUP
        } else if self.report.as_ref().is_some_and(|r| !r.overall_pass) {
            EXIT_VERIFY_FAIL
        } else {
            EXIT_OK
        }
    }

    pub fn summary(&self) -> String {
        let status = match self.exit_code() {
            EXIT_OK => "ok",
            EXIT_BLOWUP => "blow-up",
            _ => "verification failed",
        };
        let mut s = format!("{}: {} [{}] -> {}\n", self.name, status, self.regime, self.dir.display());
        if let Some(rep) = &self.report {
            for e in &rep.entries {
                s.push_str(&format!(
                    "  {:<4} {:<24} predicted {:>14} measured {:>14} {}\n",
                    if e.pass { "PASS" } else { "FAIL" },
                    e.name,
                    fmt_opt(e.predicted),
                    fmt_opt(e.measured),
                    e.note
                ));
            }
        }
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

fn series_bytes(series: &NormSeries) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    Ok(buf)
}

/// Runs one config and writes every artifact under `dir`.
pub fn simulate_into(config: &Config, dir: &Path) -> Result<RunOutcome, CliError> {
    let scenario = config.scenario()?;
    let result = evolve::run(&scenario)?;
    write_run(config, dir, &result)
}

fn write_run(config: &Config, dir: &Path, result: &RunResult) -> Result<RunOutcome, CliError> {
    let scenario = config.scenario()?;
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| io_err(&snap_dir, e))?;

    write_atomic(&dir.join("series.csv"), &series_bytes(&result.series)?)?;

    let mut snapshots = Vec::new();
    for (i, (t, field)) in result.snapshots.iter().enumerate() {
        let file = format!("snapshots/snapshot_{i:04}.csv");
        let mut buf = Vec::new();
        field.write_csv(&mut buf)?;
        write_atomic(&dir.join(&file), &buf)?;
        snapshots.push(SnapshotRecord { file, t: *t });
    }

    let report = if config.has_checks() {
        let rep = verify_series(&result.series, config)?;
        write_atomic(&dir.join("report.json"), to_json(&rep).as_bytes())?;
        Some(rep)
    } else {
        None
    };

    write_plots(config, dir, &result.series)?;

    let regime = classify(
        &scenario.params,
        &ClassifyOptions {
            declared_nu: config.declared_nu,
            critical_omega: config.critical_omega,
            grid_dim: Some(scenario.grid.dim()),
        },
    );
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        regime: regime.clone(),
        sigma: scenario.sigma(),
        labels: result.series.labels().to_vec(),
        samples: result.series.len(),
        snapshots,
        extinction: result.extinction,
        blowup: result.blowup,
        steps: result.step_log,
    };
    write_atomic(&dir.join("metadata.json"), to_json(&meta).as_bytes())?;

    Ok(RunOutcome {
        name: config.sweep_dir_name(),
        dir: dir.to_path_buf(),
        regime: regime.regime,
        extinction: result.extinction,
        blowup: result.blowup,
        report,
    })
}

/// `plot_<label>.csv` with columns `t,value,predicted`; `predicted` is empty where no envelope applies.
fn write_plots(config: &Config, dir: &Path, series: &NormSeries) -> Result<(), CliError> {
    let params = config.params()?;
    let sigma = config.scenario()?.sigma();
    let mut plots: Vec<(String, Option<DecayPrediction>)> = vec![("linf".into(), None)];
    if let Some((_, label)) = verify::admissible_level(series, config)? {
        let y0 = series.column(&label)?.first().copied().unwrap_or(0.0);
        let pred = decay_prediction(&params, sigma, y0.powf(sigma), y0).ok();
        plots.push((label, pred));
    }
    for (label, pred) in plots {
        let col = series.column(&label)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "value", "predicted"]).map_err(MetricsError::from)?;
        for (t, v) in series.times().iter().zip(&col) {
            let predicted = pred.map(|p| format!("{:e}", p.sigma_norm_envelope(*t))).unwrap_or_default();
            w.write_record([format!("{t:e}"), format!("{v:e}"), predicted])
                .map_err(MetricsError::from)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        write_atomic(&dir.join(format!("plot_{label}.csv")), &bytes)?;
    }
    Ok(())
}

pub fn cmd_verify(path: &Path, config: &Config, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let series = NormSeries::read_csv(file)?;
    let report = verify_series(&series, config)?;
    if json {
        emit(out, &to_json(&report))?;
    } else {
        for e in &report.entries {
            emit(
                out,
                &format!(
                    "{:<4} {:<24} predicted {:>14} measured {:>14} {}\n",
                    if e.pass { "PASS" } else { "FAIL" },
                    e.name,
                    fmt_opt(e.predicted),
                    fmt_opt(e.measured),
                    e.note
                ),
            )?;
        }
        emit(out, &format!("overall {}\n", if report.overall_pass { "PASS" } else { "FAIL" }))?;
    }
    Ok(if report.overall_pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

/// Runs every sweep point in parallel, one subdirectory each, then writes `summary.csv`.
pub fn cmd_sweep(config: &Config, dir: &Path) -> Result<Vec<RunOutcome>, CliError> {
    let points = config.sweep_points();
    let outcomes: Vec<Result<RunOutcome, CliError>> = points
        .par_iter()
        .map(|c| {
            c.validate()?;
            simulate_into(c, &dir.join(c.sweep_dir_name()))
        })
        .collect();
    let outcomes: Vec<RunOutcome> = outcomes.into_iter().collect::<Result<_, _>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "p", "q", "gamma", "regime", "extinction", "blowup", "pass"])
        .map_err(MetricsError::from)?;
    for (c, o) in points.iter().zip(&outcomes) {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([
            o.name.clone(),
            format!("{:e}", c.p),
            format!("{:e}", c.q),
            format!("{:e}", c.gamma),
            o.regime.to_string(),
            opt(o.extinction),
            opt(o.blowup),
            (o.exit_code() == EXIT_OK).to_string(),
        ])
        .map_err(MetricsError::from)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("summary.csv"), &bytes)?;
    Ok(outcomes)
}
