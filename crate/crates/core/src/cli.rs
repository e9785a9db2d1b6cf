//! Command-line front end. `dispatch` parses argv, runs one subcommand and
//! maps the outcome to an exit code: 0 success, 1 usage, domain or
//! configuration error, 2 internal error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, ModePartition, TailSide};
use crate::empirics::{self, ColumnMapping, ModeSpecLibrary, ValueKind};
use crate::error::{Error, Result};
use crate::estimator::{self, ThresholdSpec};
use crate::extremal::{self, NondegeneracyConfig};
use crate::models::{self, io as data_io, DgpSpec};
use crate::montecarlo::{self, ExperimentConfig};
use crate::output;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "tailgauge",
    version,
    about = "Tail-index regression, rank-condition diagnostics and extremal comparisons"
)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sampling; results do not depend on it.
    #[arg(long, global = true)]
    pub shards: Option<usize>,
    /// Output directory (default ./tailgauge-out/<timestamp>).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Print errors to stderr as JSON.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate a DGP and report the covariate law on its right tails.
    Simulate(SimulateArgs),
    /// Fit the tail-index regression to a CSV.
    Estimate(EstimateArgs),
    /// Rank-condition diagnostics for a CSV.
    Diagnose(DiagnoseArgs),
    /// Left-tail event times of a daily price or return series.
    Empirics(EmpiricsArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Diagnose(_) => "diagnose",
            Command::Empirics(_) => "empirics",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Built-in design name.
    #[arg(
        long,
        required_unless_present = "dgp_config",
        conflicts_with = "dgp_config"
    )]
    pub dgp: Option<String>,
    /// TOML design descriptor.
    #[arg(long)]
    pub dgp_config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000_000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95, 0.99, 0.995])]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Mode preset name or comma-separated list, applied to the first covariate.
    #[arg(long)]
    pub modes: Option<String>,
    /// Mode preset file (default: bundled presets).
    #[arg(long)]
    pub mode_presets: Option<PathBuf>,
    /// Compare the tail covariate law with its finite-w and limiting densities.
    #[arg(long)]
    pub verify_theorem3: bool,
    /// Thresholds for --verify-theorem3, as quantiles of Y.
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.99])]
    pub w_quantiles: Vec<f64>,
    /// Histogram cells per covariate axis for --verify-theorem3.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Also write the simulated sample as sample.csv.
    #[arg(long)]
    pub write_sample: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// w = Q_tau(Y) (default 0.99).
    #[arg(long, conflicts_with_all = ["top_count", "threshold_value"])]
    pub threshold_quantile: Option<f64>,
    /// Keep the n0 largest responses.
    #[arg(long, conflicts_with = "threshold_value")]
    pub top_count: Option<usize>,
    #[arg(long)]
    pub threshold_value: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Result file name inside the output directory.
    #[arg(long, default_value = "estimate.json")]
    pub out: String,
}

impl EstimateArgs {
    fn threshold(&self) -> ThresholdSpec {
        match (
            self.threshold_quantile,
            self.top_count,
            self.threshold_value,
        ) {
            (_, Some(k), _) => ThresholdSpec::TopCount(k),
            (_, _, Some(w)) => ThresholdSpec::Value(w),
            (q, _, _) => ThresholdSpec::Quantile(q.unwrap_or(0.99)),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95, 0.99, 0.995])]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long)]
    pub modes: Option<String>,
    #[arg(long)]
    pub mode_presets: Option<PathBuf>,
    /// Report file name inside the output directory.
    #[arg(long, default_value = "report.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EmpiricsArgs {
    /// CSV of price levels.
    #[arg(long, required_unless_present = "returns", conflicts_with = "returns")]
    pub prices: Option<PathBuf>,
    /// CSV of log returns.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long, default_value = "date")]
    pub date_col: String,
    /// Defaults to `close` for prices and `return` for returns.
    #[arg(long)]
    pub value_col: Option<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.01, 0.005])]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value = "four-mode")]
    pub modes: String,
    #[arg(long)]
    pub mode_presets: Option<PathBuf>,
    /// First date kept (inclusive).
    #[arg(long)]
    pub start: Option<String>,
    /// Last date kept (inclusive).
    #[arg(long)]
    pub end: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    /// `None` when the file could not be read.
    pub sha256: Option<String>,
}

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub subcommand: &'static str,
    pub argv: Vec<String>,
    pub flags: &'a Cli,
    pub seed: u64,
    pub shards: usize,
    pub out_dir: PathBuf,
    pub version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub status: &'static str,
    pub outputs: Vec<PathBuf>,
}

fn digest(path: &Path) -> InputDigest {
    InputDigest {
        path: path.to_path_buf(),
        sha256: std::fs::read(path)
            .ok()
            .map(|b| hex::encode(Sha256::digest(&b))),
    }
}

fn default_out_dir() -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    PathBuf::from("tailgauge-out").join(stamp.to_string())
}

fn mode_library(path: Option<&Path>) -> Result<ModeSpecLibrary> {
    match path {
        Some(p) => ModeSpecLibrary::load(p),
        None => Ok(ModeSpecLibrary::bundled()),
    }
}

fn parse_date_flag(s: &str) -> Result<chrono::NaiveDate> {
    empirics::parse_date(s).ok_or_else(|| Error::Config(format!("cannot parse date '{s}'")))
}

fn input_paths(cli: &Cli) -> Vec<&Path> {
    match &cli.command {
        Command::Simulate(a) => a
            .dgp_config
            .iter()
            .chain(&a.mode_presets)
            .map(PathBuf::as_path)
            .collect(),
        Command::Estimate(a) => vec![a.data.as_path()],
        Command::Diagnose(a) => std::iter::once(&a.data)
            .chain(&a.mode_presets)
            .map(PathBuf::as_path)
            .collect(),
        Command::Empirics(a) => a
            .prices
            .iter()
            .chain(&a.returns)
            .chain(&a.mode_presets)
            .map(PathBuf::as_path)
            .collect(),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 1 && json_errors {
                report_error("usage", &e.to_string(), true);
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli, argv)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            report_error(e.kind(), &e.to_string(), cli.json_errors);
            if e.is_internal() {
                2
            } else {
                1
            }
        }
        Err(_) => {
            report_error("internal", "unexpected panic", cli.json_errors);
            2
        }
    }
}

fn report_error(kind: &str, message: &str, json: bool) {
    if json {
        let v = serde_json::json!({ "error": kind, "message": message });
        eprintln!("{v}");
    } else {
        eprintln!("error: {message}");
    }
}

fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let out_dir = cli.out_dir.clone().unwrap_or_else(default_out_dir);
    let shards = cli.shards.unwrap_or_else(montecarlo::default_shards);
    if shards == 0 {
        return Err(Error::Config("--shards must be at least 1".into()));
    }
    let inputs = input_paths(cli).into_iter().map(digest).collect();
    output::ensure_dir(&out_dir)?;
    let mut manifest = RunManifest {
        subcommand: cli.command.name(),
        argv,
        flags: cli,
        seed: cli.seed,
        shards,
        out_dir: out_dir.clone(),
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        status: "running",
        outputs: Vec::new(),
    };
    let manifest_path = out_dir.join(MANIFEST);
    output::write_json(&manifest_path, &manifest)?;
    let outputs = match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, shards, &out_dir),
        Command::Estimate(a) => estimate(a, &out_dir),
        Command::Diagnose(a) => diagnose(a, &out_dir),
        Command::Empirics(a) => run_empirics(a, &out_dir),
    };
    match outputs {
        Ok(outputs) => {
            manifest.outputs = outputs;
            manifest.status = "complete";
            output::write_json(&manifest_path, &manifest)
        }
        Err(e) => {
            manifest.status = "failed";
            let _ = output::write_json(&manifest_path, &manifest);
            Err(e)
        }
    }
}

fn simulate(a: &SimulateArgs, seed: u64, shards: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let dgp = match (&a.dgp, &a.dgp_config) {
        (Some(name), _) => DgpSpec::builtin(name)?,
        (None, Some(path)) => DgpSpec::load(path)?,
        (None, None) => {
            return Err(Error::Config(
                "one of --dgp or --dgp-config is required".into(),
            ))
        }
    };
    let partition = match &a.modes {
        Some(m) => Some(mode_library(a.mode_presets.as_deref())?.resolve(m)?),
        None if dgp.name().starts_with("dgp4m") => Some(ModePartition::dgp4m()),
        None => None,
    };
    let mut config = ExperimentConfig::new(dgp.clone(), a.n, seed);
    config.taus = a.taus.clone();
    config.h = a.h;
    config.shards = shards;
    config.partition = partition;
    let result = montecarlo::run_rank_experiment(&config)?;
    for w in &result.report.warnings {
        eprintln!("warning: {w}");
    }
    let mut written = montecarlo::write_rank_outputs(&result, dir)?;
    if a.verify_theorem3 {
        let report = extremal::verify_nondegeneracy(&NondegeneracyConfig {
            dgp: dgp.clone(),
            n: a.n,
            w_quantiles: a.w_quantiles.clone(),
            bins: a.bins,
            seed,
            shards,
        })?;
        let csv = dir.join("nondegeneracy.csv");
        extremal::write_comparison_table(&csv, &report)?;
        let json = dir.join("nondegeneracy.json");
        output::write_json(&json, &report)?;
        written.extend([csv, json]);
    }
    if a.write_sample {
        let data = models::sample(dgp.as_dgp(), a.n, seed)?;
        let path = dir.join("sample.csv");
        data_io::write_observations(&path, &data)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    covariates: Vec<String>,
    n: usize,
    threshold: estimator::TailThreshold,
    theta: Vec<f64>,
    standard_errors: Option<Vec<f64>>,
    level: f64,
    intervals: Option<Vec<estimator::ConfidenceInterval>>,
    gram_eigenvalues: Vec<f64>,
    residual_ks_statistic: f64,
    residual_ks_critical: f64,
    residual_mean: f64,
    solver: estimator::SolverTrace,
}

fn estimate(a: &EstimateArgs, dir: &Path) -> Result<Vec<PathBuf>> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    let (data, names) = data_io::read_observations(&a.data, &a.response)?;
    let fit = estimator::fit(&data, a.threshold())?;
    let check = estimator::exponential_residuals(&fit.theta_hat, &data, &fit.threshold)?;
    let mut covariates = vec!["intercept".to_string()];
    covariates.extend(names);
    let report = EstimateReport {
        covariates,
        n: data.n(),
        threshold: fit.threshold,
        theta: fit.theta_hat.iter().copied().collect(),
        standard_errors: estimator::standard_errors(&fit).ok(),
        level: a.level,
        intervals: estimator::confidence_intervals(&fit, a.level).ok(),
        gram_eigenvalues: fit.gram_eigs.clone(),
        residual_ks_statistic: check.ks_statistic,
        residual_ks_critical: check.critical,
        residual_mean: check.mean,
        solver: fit.solver_trace.clone(),
    };
    if report.intervals.is_none() {
        eprintln!("warning: tail Gram matrix is near singular; no standard errors reported");
    }
    let path = dir.join(&a.out);
    output::write_json(&path, &report)?;
    Ok(vec![path])
}

fn diagnose(a: &DiagnoseArgs, dir: &Path) -> Result<Vec<PathBuf>> {
    let (data, _) = data_io::read_observations(&a.data, &a.response)?;
    let partition = a
        .modes
        .as_deref()
        .map(|m| mode_library(a.mode_presets.as_deref())?.resolve(m))
        .transpose()?;
    let report =
        diagnostics::tail_condition_report(&data, &a.taus, TailSide::Right, partition.as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut written = Vec::new();
    if data.p() > 1 {
        let x = data.covariate(0);
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            for &tau in &a.taus {
                let (_, mask) = diagnostics::tail_mask(&data.response, tau, TailSide::Right)?;
                let hist =
                    diagnostics::histogram_density(x, &mask, TailSide::Right.mass(tau), a.h)?;
                let path = dir.join(format!("density_tau_{}.csv", output::tau_label(tau)));
                output::write_histogram(&path, &hist)?;
                written.push(path);
            }
        } else {
            eprintln!("warning: first covariate leaves [0, 1]; no histograms written");
        }
    }
    let path = dir.join(&a.out);
    output::write_json(&path, &report)?;
    written.push(path);
    Ok(written)
}

fn run_empirics(a: &EmpiricsArgs, dir: &Path) -> Result<Vec<PathBuf>> {
    let (path, kind, default_col) = match (&a.prices, &a.returns) {
        (Some(p), _) => (p, ValueKind::Prices, "close"),
        (None, Some(r)) => (r, ValueKind::Returns, "return"),
        (None, None) => {
            return Err(Error::Config(
                "one of --prices or --returns is required".into(),
            ))
        }
    };
    let mapping = ColumnMapping {
        date_col: a.date_col.clone(),
        value_col: a
            .value_col
            .clone()
            .unwrap_or_else(|| default_col.to_string()),
        kind,
    };
    let mut series = empirics::load_price_series(path, &mapping)?;
    if a.start.is_some() || a.end.is_some() {
        let (first, last) = series.date_range();
        let start = a
            .start
            .as_deref()
            .map(parse_date_flag)
            .transpose()?
            .unwrap_or(first);
        let end = a
            .end
            .as_deref()
            .map(parse_date_flag)
            .transpose()?
            .unwrap_or(last);
        series = empirics::subperiod(&series, start, end)?;
    }
    let (first, last) = series.date_range();
    eprintln!("T = {} returns from {first} to {last}", series.len());
    let modes = mode_library(a.mode_presets.as_deref())?.resolve(&a.modes)?;
    let report = empirics::left_tail_report(&series, &a.taus, &modes, a.h)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    empirics::write_report(&report, dir)
}
