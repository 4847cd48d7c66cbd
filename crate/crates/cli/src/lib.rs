//! Command-line front end.
//!
//! Every run writes one JSON result document with a common envelope. It
//! goes to `--out` when given, otherwise to stdout, except for `check-dual`
//! (stdout carries the gap line) and `gen-data` without `--csv` (stdout
//! carries the CSV), which fall back to stderr.
//!
//! ```json
//! { "schema": "drcvar/<command>/v1", "command": "...", "status": "ok" | "error",
//!   "exit_code": 0, "error": null | { "kind": "...", "message": "...", "solver_status": ... },
//!   "result": { ... } | null }
//! ```
//!
//! A command line that fails to parse also yields an error document on
//! stdout, with `command` set to the subcommand name when it was
//! recognised and to `drcvar` otherwise. [`RESULT_SCHEMA`] describes all
//! documents.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
//! The default tolerance profile is `strict`; `DRCVAR_TOL_PROFILE=fast`
//! (or `--tol-profile fast`) loosens solver tolerances to 1e-6.

// `!(x > 0.0)` and friends are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use drcvar::estimation::{fit, FitOptions, FitResult, Method};
use drcvar::experiment::{
    evaluate_out_of_sample, evaluate_out_of_sample_original, load_dataset, log_radius_grid, radius_sweep, save_dataset,
    split_and_normalize, synth_spiky_with_spikes, CsvSchema, Dataset, OutOfSample, ScaleMode, Split, SweepConfig,
    SweepReport, SynthConfig,
};
use drcvar::{AffineEstimator, EmpiricalDistribution, Error, RiskSpec};
use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const TOL_PROFILE_ENV: &str = "DRCVAR_TOL_PROFILE";

/// JSON Schema (draft 2020-12) of every result document.
pub const RESULT_SCHEMA: &str = include_str!("../schemas/drcvar-v1.schema.json");

const COMMANDS: [&str; 5] = ["fit", "eval", "sweep", "check-dual", "gen-data"];

#[derive(Debug, Parser)]
#[command(name = "drcvar", version, about = "Distributionally robust CVaR affine estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator and write a FitResult document.
    Fit(FitArgs),
    /// Evaluate a fitted estimator on held-out data.
    Eval(EvalArgs),
    /// Sweep the radius for dr_cvar and dr_mse.
    Sweep(SweepArgs),
    /// Compare the SDP optimum with the dual evaluation at the fitted estimator.
    CheckDual(CheckDualArgs),
    /// Write a seeded synthetic price/load CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TolProfile {
    Strict,
    Fast,
}

impl TolProfile {
    pub fn options(self) -> FitOptions {
        match self {
            TolProfile::Strict => FitOptions::strict(),
            TolProfile::Fast => FitOptions::fast(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            TolProfile::Strict => "strict",
            TolProfile::Fast => "fast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemaArg {
    Wide,
    Long,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    PerCoordinate,
    Global,
}

/// Where the atoms come from.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Price/load CSV (wide `date,p00..p23,l00..l23` or long `date,hour,price,load`).
    #[arg(long, conflicts_with = "atoms")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub schema: SchemaArg,
    /// First test day; earlier days train. Defaults to the day after the
    /// first two thirds of the file.
    #[arg(long, conflicts_with = "train_days")]
    pub split_date: Option<NaiveDate>,
    /// Number of leading days used for training.
    #[arg(long)]
    pub train_days: Option<usize>,
    #[arg(long, value_enum, default_value = "per-coordinate")]
    pub scale: ScaleArg,
    /// Headerless numeric CSV of atoms, one per row: x (first n columns) then y.
    #[arg(long, requires = "n")]
    pub atoms: Option<PathBuf>,
    /// Dimension of x for `--atoms`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Held-out atoms for `--atoms` input, same layout.
    #[arg(long, requires = "atoms")]
    pub test_atoms: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[arg(long, value_enum, env = TOL_PROFILE_ENV, default_value = "strict")]
    pub tol_profile: TolProfile,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub radius: f64,
    #[arg(long, default_value = "dr_cvar")]
    pub method: Method,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Result document destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Fit document or bare `{ "a": [[..]], "b": [..] }` estimator.
    #[arg(long)]
    pub estimator: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Result document destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = -5, allow_negative_numbers = true)]
    pub radii_log_from: i32,
    #[arg(long, default_value_t = 5, allow_negative_numbers = true)]
    pub radii_log_to: i32,
    #[arg(long, default_value_t = 3)]
    pub per_decade: usize,
    /// Explicit comma-separated radii; overrides the log grid.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Worker threads for independent fits.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Skip the nominal_cvar and nominal_mse reference fits.
    #[arg(long)]
    pub no_baselines: bool,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Result document, report included; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sweep table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Plot data: one row per radius, one `oos_cvar` column per method.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckDualArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    /// `dr_cvar` or `dr_mse`.
    #[arg(long, default_value = "dr_cvar")]
    pub method: Method,
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Result document destination; stderr when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Generator seed; the same seed gives an identical file.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().days)]
    pub days: usize,
    #[arg(long, default_value_t = SynthConfig::default().start)]
    pub start: NaiveDate,
    #[arg(long, default_value_t = SynthConfig::default().spike_prob)]
    pub spike_prob: f64,
    #[arg(long, default_value_t = SynthConfig::default().spike_scale)]
    pub spike_scale: f64,
    #[arg(long, default_value_t = SynthConfig::default().spike_growth)]
    pub spike_growth: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    pub noise: f64,
    /// CSV destination (wide schema); stdout when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Result document destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Output { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                Error::Solve(_)
                | Error::SolverStatus { .. }
                | Error::Validation(_)
                | Error::DualNonConvergence { .. }
                | Error::DualInconsistent { .. }
                | Error::GammaOutsideDomain { .. } => EXIT_SOLVER,
                _ => EXIT_DATA,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_SOLVER => "solver",
            _ => "data",
        }
    }

    fn solver_status(&self) -> Option<String> {
        match self {
            CliError::Core(Error::SolverStatus { status, .. }) => Some(status.as_str().to_string()),
            _ => None,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// A finished command: its document payload, exit code and output path.
struct Outcome {
    result: Value,
    exit_code: i32,
    error: Option<Value>,
}

impl Outcome {
    fn ok(result: impl Serialize) -> Self {
        Self {
            result: serde_json::to_value(result).expect("serializable result"),
            exit_code: EXIT_OK,
            error: None,
        }
    }
}

fn schema_id(command: &str) -> String {
    format!("drcvar/{command}/v1")
}

fn envelope(command: &str, outcome: &Outcome) -> Value {
    json!({
        "schema": schema_id(command),
        "command": command,
        "status": if outcome.exit_code == EXIT_OK { "ok" } else { "error" },
        "exit_code": outcome.exit_code,
        "error": outcome.error,
        "result": if outcome.result.is_null() { Value::Null } else { outcome.result.clone() },
    })
}

fn error_value(e: &CliError) -> Value {
    json!({
        "kind": e.kind(),
        "message": e.to_string(),
        "solver_status": e.solver_status(),
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

/// Where the result document goes when `--out` is absent.
#[derive(Clone, Copy)]
enum Fallback {
    Stdout,
    /// Stdout carries the command's primary output.
    Stderr,
}

fn emit(command: &str, out: Option<&Path>, fallback: Fallback, outcome: &Outcome) -> CliResult<()> {
    let doc = envelope(command, outcome);
    let text = serde_json::to_string_pretty(&doc).expect("valid JSON") + "\n";
    match (out, fallback) {
        (Some(p), _) => write_text(p, &text),
        (None, Fallback::Stderr) => {
            eprint!("{text}");
            Ok(())
        }
        (None, Fallback::Stdout) => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|source| CliError::Output {
                path: "stdout".into(),
                source,
            })
        }
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            let outcome = Outcome {
                result: Value::Null,
                exit_code: EXIT_USAGE,
                error: Some(error_value(&err)),
            };
            let command = argv
                .get(1)
                .and_then(|a| a.to_str())
                .filter(|a| COMMANDS.contains(a))
                .unwrap_or("drcvar");
            let _ = emit(command, None, Fallback::Stdout, &outcome);
            return EXIT_USAGE;
        }
    };
    let (name, out, res) = match &cli.command {
        Command::Fit(a) => ("fit", a.out.clone(), cmd_fit(a)),
        Command::Eval(a) => ("eval", a.out.clone(), cmd_eval(a)),
        Command::Sweep(a) => ("sweep", a.out.clone(), cmd_sweep(a)),
        Command::CheckDual(a) => ("check-dual", a.out.clone(), cmd_check_dual(a)),
        Command::GenData(a) => ("gen-data", a.out.clone(), cmd_gen_data(a)),
    };
    let fallback = match &cli.command {
        Command::GenData(a) if a.csv.is_none() => Fallback::Stderr,
        Command::CheckDual(_) => Fallback::Stderr,
        _ => Fallback::Stdout,
    };
    let outcome = match res {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome {
                result: Value::Null,
                exit_code: e.exit_code(),
                error: Some(error_value(&e)),
            }
        }
    };
    if let Err(e) = emit(name, out.as_deref(), fallback, &outcome) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    outcome.exit_code
}

/// Training and (optional) test atoms plus provenance.
struct Loaded {
    train: EmpiricalDistribution,
    test: Option<EmpiricalDistribution>,
    split: Option<Split>,
    source: Value,
}

fn read_atoms(path: &Path, n: usize) -> CliResult<EmpiricalDistribution> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(Error::from)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let row: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptySample.into());
    }
    let width = rows[0].len();
    if width <= n {
        return Err(Error::Dimension(format!("rows have {width} columns, need more than n = {n}")).into());
    }
    Ok(EmpiricalDistribution::from_rows(&rows, n, width - n)?)
}

fn load_input(input: &InputArgs) -> CliResult<Loaded> {
    match (&input.data, &input.atoms) {
        (Some(path), None) => {
            let schema = match input.schema {
                SchemaArg::Wide => CsvSchema::Wide,
                SchemaArg::Long => CsvSchema::Long,
                SchemaArg::Auto => CsvSchema::Auto,
            };
            let ds = load_dataset(path, schema)?;
            let split_date = split_date(&ds, input)?;
            let mode = match input.scale {
                ScaleArg::PerCoordinate => ScaleMode::PerCoordinate,
                ScaleArg::Global => ScaleMode::Global,
            };
            let split = split_and_normalize(&ds, split_date, mode)?;
            let source = json!({
                "kind": "dataset",
                "path": path.display().to_string(),
                "days": ds.len(),
                "split_date": split_date.to_string(),
                "scale": mode,
                "n_train": split.train.len(),
                "n_test": split.test.len(),
            });
            Ok(Loaded {
                train: split.train.clone(),
                test: Some(split.test.clone()),
                split: Some(split),
                source,
            })
        }
        (None, Some(path)) => {
            let n = input.n.ok_or_else(|| CliError::Usage("--atoms requires --n".into()))?;
            let train = read_atoms(path, n)?;
            let test = input.test_atoms.as_deref().map(|p| read_atoms(p, n)).transpose()?;
            let source = json!({
                "kind": "atoms",
                "path": path.display().to_string(),
                "test_path": input.test_atoms.as_ref().map(|p| p.display().to_string()),
                "n": train.n(),
                "m": train.m(),
                "n_train": train.len(),
                "n_test": test.as_ref().map(|t| t.len()),
            });
            Ok(Loaded {
                train,
                test,
                split: None,
                source,
            })
        }
        _ => Err(CliError::Usage("exactly one of --data or --atoms is required".into())),
    }
}

fn split_date(ds: &Dataset, input: &InputArgs) -> CliResult<NaiveDate> {
    if let Some(d) = input.split_date {
        return Ok(d);
    }
    let k = input.train_days.unwrap_or(2 * ds.len() / 3);
    ds.records()
        .get(k)
        .map(|r| r.date)
        .ok_or_else(|| Error::Data(format!("cannot keep {k} training days out of {}", ds.len())).into())
}

#[derive(Serialize)]
struct FitDoc {
    source: Value,
    tol_profile: &'static str,
    fit: FitResult,
    out_of_sample: Option<OutOfSample>,
    out_of_sample_original: Option<OutOfSample>,
}

fn out_of_sample(
    est: &AffineEstimator,
    loaded: &Loaded,
    alpha: f64,
) -> CliResult<(Option<OutOfSample>, Option<OutOfSample>)> {
    let Some(test) = &loaded.test else {
        return Ok((None, None));
    };
    let oos = evaluate_out_of_sample(est, test, alpha)?;
    let orig = match &loaded.split {
        Some(s) => Some(evaluate_out_of_sample_original(est, test, alpha, &s.scaler)?),
        None => None,
    };
    Ok((Some(oos), orig))
}

fn cmd_fit(args: &FitArgs) -> CliResult<Outcome> {
    let loaded = load_input(&args.input)?;
    let spec = RiskSpec::new(args.alpha, args.radius)?;
    let res = fit(args.method, &loaded.train, &spec, &args.profile.tol_profile.options())?;
    let (oos, orig) = out_of_sample(&res.estimator, &loaded, args.alpha)?;
    Ok(Outcome::ok(FitDoc {
        source: loaded.source,
        tol_profile: args.profile.tol_profile.as_str(),
        fit: res,
        out_of_sample: oos,
        out_of_sample_original: orig,
    }))
}

fn read_estimator(path: &Path) -> CliResult<AffineEstimator> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let node = ["/result/fit/estimator", "/estimator", ""]
        .iter()
        .find_map(|p| doc.pointer(p).filter(|v| v.get("a").is_some()))
        .ok_or_else(|| Error::Data(format!("{}: no estimator found", path.display())))?;
    serde_json::from_value(node.clone()).map_err(|e| Error::Data(format!("{}: {e}", path.display())).into())
}

fn cmd_eval(args: &EvalArgs) -> CliResult<Outcome> {
    let loaded = load_input(&args.input)?;
    let est = read_estimator(&args.estimator)?;
    let (target, on) = match &loaded.test {
        Some(t) => (t, "test"),
        None => (&loaded.train, "train"),
    };
    let metrics = evaluate_out_of_sample(&est, target, args.alpha)?;
    let original = match &loaded.split {
        Some(s) => Some(evaluate_out_of_sample_original(&est, target, args.alpha, &s.scaler)?),
        None => None,
    };
    Ok(Outcome::ok(json!({
        "source": loaded.source,
        "evaluated_on": on,
        "alpha": args.alpha,
        "units": "normalized",
        "metrics": metrics,
        "metrics_original": original,
    })))
}

#[derive(Serialize)]
struct SweepDoc {
    source: Value,
    tol_profile: &'static str,
    threads: usize,
    failed_rows: usize,
    report: SweepReport,
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<Outcome> {
    let loaded = load_input(&args.input)?;
    let test = loaded
        .test
        .clone()
        .ok_or_else(|| CliError::Usage("sweep needs held-out data: --data or --test-atoms".into()))?;
    let radii = match &args.radii {
        Some(r) => r.clone(),
        None => log_radius_grid(args.radii_log_from, args.radii_log_to, args.per_decade)?,
    };
    if args.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let cfg = SweepConfig {
        alpha: args.alpha,
        radii,
        options: args.profile.tol_profile.options(),
        scaler: loaded.split.as_ref().map(|s| s.scaler.clone()),
        include_baselines: !args.no_baselines,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", args.threads)))?;
    let report = pool.install(|| radius_sweep(&loaded.train, &test, &cfg))?;
    if let Some(p) = &args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_text(p, &String::from_utf8_lossy(&buf))?;
    }
    if let Some(p) = &args.plot_data {
        let mut buf = Vec::new();
        report.write_plot_data(&mut buf)?;
        write_text(p, &String::from_utf8_lossy(&buf))?;
    }
    let failed_rows = report
        .rows
        .iter()
        .chain(&report.baselines)
        .filter(|r| !r.is_ok())
        .count();
    Ok(Outcome::ok(SweepDoc {
        source: loaded.source,
        tol_profile: args.profile.tol_profile.as_str(),
        threads: args.threads,
        failed_rows,
        report,
    }))
}

fn cmd_check_dual(args: &CheckDualArgs) -> CliResult<Outcome> {
    if !args.method.is_robust() {
        return Err(CliError::Usage("check-dual needs --method dr_cvar or dr_mse".into()));
    }
    if !(args.radius > 0.0) {
        return Err(CliError::Usage("check-dual needs a positive --radius".into()));
    }
    let loaded = load_input(&args.input)?;
    let alpha = if args.method == Method::DrMse { 1.0 } else { args.alpha };
    let spec = RiskSpec::new(alpha, args.radius)?;
    let res = fit(args.method, &loaded.train, &spec, &args.profile.tol_profile.options())?;
    let pass = res.cross_check_ok();
    println!(
        "sdp {:.12e} dual {:.12e} gap {:.3e} tol {:.3e} {}",
        res.optimal_value,
        res.check_value,
        res.cross_check_gap,
        res.cross_check_tol,
        if pass { "PASS" } else { "FAIL" }
    );
    let result = json!({
        "source": loaded.source,
        "method": args.method,
        "alpha": alpha,
        "radius": args.radius,
        "sdp_value": res.optimal_value,
        "dual_value": res.check_value,
        "gap": res.cross_check_gap,
        "tolerance": res.cross_check_tol,
        "pass": pass,
        "gamma": res.gamma,
        "gamma_at_boundary": res.gamma_at_boundary,
        "solver": res.solver,
    });
    if pass {
        return Ok(Outcome::ok(result));
    }
    Ok(Outcome {
        result,
        exit_code: EXIT_SOLVER,
        error: Some(json!({
            "kind": "solver",
            "message": format!("gap {:e} exceeds tolerance {:e}", res.cross_check_gap, res.cross_check_tol),
            "solver_status": res.solver.as_ref().map(|s| s.status.clone()),
        })),
    })
}

fn cmd_gen_data(args: &GenDataArgs) -> CliResult<Outcome> {
    let cfg = SynthConfig {
        days: args.days,
        start: args.start,
        spike_prob: args.spike_prob,
        spike_scale: args.spike_scale,
        spike_growth: args.spike_growth,
        noise: args.noise,
    };
    let synth = synth_spiky_with_spikes(&cfg, args.seed)?;
    match &args.csv {
        Some(p) => save_dataset(&synth.dataset, p).map_err(|e| match e {
            Error::Io(source) => CliError::Output {
                path: p.display().to_string(),
                source,
            },
            other => other.into(),
        })?,
        None => drcvar::experiment::write_dataset(&synth.dataset, std::io::stdout().lock())?,
    }
    let spike_days = synth.spikes.iter().filter(|&&h| h > 0.0).count();
    let max_spike = synth.spikes.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome::ok(json!({
        "seed": args.seed,
        "config": cfg,
        "csv": args.csv.as_ref().map(|p| p.display().to_string()),
        "days": synth.dataset.len(),
        "spike_days": spike_days,
        "max_spike": max_spike,
    })))
}
