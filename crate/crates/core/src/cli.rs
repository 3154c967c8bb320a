//! Command-line front end: loads `Σ` from CSV or JSON, evaluates the moment
//! formulas or one of the oracles, and reports as text or JSON.
//!
//! Indices on the command line are 1-based; [`RunConfig`] holds them 0-based.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::linalg::{CovarianceMatrix, IndexSet, Matrix};
use crate::moments::{minor_mean, minor_variance, MinorSpec, WishartModel};
use crate::oracles::{calibration_report, mc_moment_estimate, wick_second_moment, McMoments};

/// Symmetry tolerance for matrices read from files.
pub const FILE_SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Relative agreement required by the `oracle` command.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;
pub const EXIT_ORACLE_REFUSED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "wishart-minors",
    version,
    about = "Mean and variance of minors of Wishart matrices, with Monte Carlo and exact Wick verification"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Print E[det(S_IJ)].
    Mean(RunArgs),
    /// Print the variance with its term-by-term breakdown.
    Variance(RunArgs),
    /// Compare the formula against a Monte Carlo estimate.
    Verify(RunArgs),
    /// Compare the formula against the exact Wick expansion.
    Oracle(RunArgs),
    /// Select the trace-term convention that matches the Wick expansion.
    Calibrate(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Covariance matrix file (.csv or .json).
    #[arg(long)]
    sigma: PathBuf,
    /// Degrees of freedom.
    #[arg(long)]
    n: u64,
    /// Row indices, 1-based and comma-separated.
    #[arg(long)]
    rows: String,
    /// Column indices, 1-based and comma-separated.
    #[arg(long)]
    cols: String,
    #[arg(long, default_value_t = 200_000)]
    reps: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Emit one JSON object instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long = "tolerance-sigmas", default_value_t = 5.0)]
    tolerance_sigmas: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Mean,
    Variance,
    Verify,
    Oracle,
    Calibrate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mean => "mean",
            Command::Variance => "variance",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
            Command::Calibrate => "calibrate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub sigma_path: PathBuf,
    pub n: u64,
    /// 0-based, ascending.
    pub rows: Vec<usize>,
    /// 0-based, ascending.
    pub cols: Vec<usize>,
    pub reps: u64,
    pub seed: u64,
    pub output: OutputFormat,
    pub tolerance_sigmas: f64,
}

impl RunConfig {
    fn from_args(command: Command, args: RunArgs) -> Result<Self> {
        if args.n == 0 {
            return Err(invalid("--n must be a positive integer"));
        }
        if args.reps < 2 {
            return Err(invalid("--reps must be at least 2"));
        }
        if !(args.tolerance_sigmas > 0.0 && args.tolerance_sigmas.is_finite()) {
            return Err(invalid("--tolerance-sigmas must be positive"));
        }
        Ok(Self {
            command,
            sigma_path: args.sigma,
            n: args.n,
            rows: parse_index_list(&args.rows, "--rows")?,
            cols: parse_index_list(&args.cols, "--cols")?,
            reps: args.reps,
            seed: args.seed,
            output: if args.json {
                OutputFormat::Json
            } else {
                OutputFormat::Text
            },
            tolerance_sigmas: args.tolerance_sigmas,
        })
    }
}

/// Parses `"1,3,2"` into sorted 0-based indices `[0, 1, 2]`. Zero, repeated
/// or non-integer entries are rejected.
pub fn parse_index_list(text: &str, flag: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for field in text.split(',') {
        let field = field.trim();
        let value: usize = field
            .parse()
            .map_err(|_| invalid(format!("{flag}: '{field}' is not a positive integer")))?;
        if value == 0 {
            return Err(invalid(format!("{flag}: indices are 1-based, got 0")));
        }
        out.push(value - 1);
    }
    out.sort_unstable();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(invalid(format!("{flag}: duplicate index {}", w[0] + 1)));
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonMatrix {
    matrix: Vec<Vec<f64>>,
}

/// Reads a covariance matrix. Files ending in `.json` hold
/// `{"matrix": [[...], ...]}`; anything else is read as CSV with one matrix
/// row per line.
pub fn load_covariance(path: &Path) -> Result<CovarianceMatrix> {
    let text = fs::read_to_string(path)?;
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    let rows = if is_json {
        parse_json_matrix(&text)?
    } else {
        parse_csv_matrix(&text)?
    };
    let matrix = Matrix::from_rows(&rows)?;
    if !matrix.is_square() {
        return Err(invalid(format!(
            "covariance matrix must be square, got {}x{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    CovarianceMatrix::with_symmetry_tolerance(matrix, FILE_SYMMETRY_TOLERANCE)
}

fn parse_json_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let parsed: JsonMatrix = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(parsed.matrix)
}

fn parse_csv_matrix(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut offset = 0;
        for field in line.split(',') {
            let trimmed = field.trim();
            let column = offset + (field.len() - field.trim_start().len()) + 1;
            let value: f64 = trimmed.parse().map_err(|_| Error::Parse {
                line: line_idx + 1,
                column,
                message: format!("'{trimmed}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line: line_idx + 1,
                    column,
                    message: format!("'{trimmed}' is not finite"),
                });
            }
            row.push(value);
            offset += field.len() + 1;
        }
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    line: line_idx + 1,
                    column: 1,
                    message: format!("row has {} entries, expected {first}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty matrix file".into(),
        });
    }
    Ok(rows)
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let (command, args) = match cli.command {
        CommandArgs::Mean(a) => (Command::Mean, a),
        CommandArgs::Variance(a) => (Command::Variance, a),
        CommandArgs::Verify(a) => (Command::Verify, a),
        CommandArgs::Oracle(a) => (Command::Oracle, a),
        CommandArgs::Calibrate(a) => (Command::Calibrate, a),
    };
    match RunConfig::from_args(command, args) {
        Ok(config) => run(&config, out, err),
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Runs one configured command.
pub fn run(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match execute(config) {
        Ok(outcome) => {
            let written = match config.output {
                OutputFormat::Json => writeln!(out, "{}", outcome.json),
                OutputFormat::Text => write!(out, "{}", outcome.text),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INVALID_INPUT;
            }
            if outcome.exit != EXIT_SUCCESS {
                if let Some(msg) = outcome.diagnostic {
                    let _ = writeln!(err, "{msg}");
                }
            }
            outcome.exit
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::WickRefused(_) => EXIT_ORACLE_REFUSED,
        Error::CalibrationFailed(_) => EXIT_VERIFY_FAIL,
        _ => EXIT_INVALID_INPUT,
    }
}

struct Outcome {
    text: String,
    json: serde_json::Value,
    exit: i32,
    diagnostic: Option<String>,
}

impl Outcome {
    fn ok(text: String, json: serde_json::Value) -> Self {
        Self {
            text,
            json,
            exit: EXIT_SUCCESS,
            diagnostic: None,
        }
    }
}

fn one_based(indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|i| i + 1).collect()
}

fn relative_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1.0)
}

fn execute(config: &RunConfig) -> Result<Outcome> {
    let sigma = load_covariance(&config.sigma_path)?;
    let r = sigma.dim();
    let model = WishartModel::new(config.n, sigma)?;
    let spec = MinorSpec::new(
        IndexSet::new(config.rows.clone(), r)?,
        IndexSet::new(config.cols.clone(), r)?,
    )?;
    let header = json!({
        "command": config.command.name(),
        "n": config.n,
        "rows": one_based(&config.rows),
        "cols": one_based(&config.cols),
    });
    let with_header = |body: serde_json::Value| {
        let mut obj = header.as_object().cloned().unwrap_or_default();
        if let serde_json::Value::Object(extra) = body {
            obj.extend(extra);
        }
        serde_json::Value::Object(obj)
    };

    match config.command {
        Command::Mean => {
            let mean = minor_mean(&model, &spec)?;
            Ok(Outcome::ok(
                format!("mean = {mean}\n"),
                with_header(json!({ "mean": mean })),
            ))
        }
        Command::Variance => {
            let report = minor_variance(&model, &spec)?;
            let mut text = format!(
                "mean = {}\nvariance = {}\nsecond_moment = {}\nterm1 = {}\nterm2 = {}\n",
                report.mean, report.variance, report.second_moment, report.term1, report.term2
            );
            for t in &report.trace_terms {
                text.push_str(&format!("trace_term[k={}] = {}\n", t.k, t.contribution));
            }
            let body = serde_json::to_value(&report).map_err(|e| invalid(e.to_string()))?;
            Ok(Outcome::ok(text, with_header(body)))
        }
        Command::Verify => verify(config, &model, &spec, with_header),
        Command::Oracle => {
            let report = minor_variance(&model, &spec)?;
            let wick = wick_second_moment(&model, &spec)?;
            let wick_variance = wick - report.mean * report.mean;
            let second_error = relative_error(report.second_moment, wick);
            let variance_error = relative_error(report.variance, wick_variance);
            let agree = second_error <= ORACLE_TOLERANCE && variance_error <= ORACLE_TOLERANCE;
            let verdict = if agree { "AGREE" } else { "DISAGREE" };
            let text = format!(
                "second_moment: formula = {}, wick = {}, relative_error = {:e}\n\
                 variance: formula = {}, wick = {}, relative_error = {:e}\n\
                 {verdict}\n",
                report.second_moment, wick, second_error, report.variance, wick_variance, variance_error
            );
            let json = with_header(json!({
                "formula_second_moment": report.second_moment,
                "wick_second_moment": wick,
                "second_moment_relative_error": second_error,
                "formula_variance": report.variance,
                "wick_variance": wick_variance,
                "variance_relative_error": variance_error,
                "tolerance": ORACLE_TOLERANCE,
                "verdict": verdict,
            }));
            Ok(Outcome {
                text,
                json,
                exit: if agree { EXIT_SUCCESS } else { EXIT_VERIFY_FAIL },
                diagnostic: (!agree).then(|| {
                    format!("oracle disagreement: relative error {variance_error:e} exceeds {ORACLE_TOLERANCE:e}")
                }),
            })
        }
        Command::Calibrate => {
            let report = calibration_report(&model, &spec)?;
            let mut text = format!("wick_variance = {}\n", report.wick_variance);
            for c in &report.candidates {
                text.push_str(&format!(
                    "{}: variance = {}, relative_error = {:e}{}\n",
                    c.convention,
                    c.variance,
                    c.relative_error,
                    if c.matches { "  <- match" } else { "" }
                ));
            }
            let selected = report.selected();
            let mut json = with_header(json!({
                "wick_variance": report.wick_variance,
                "candidates": report.candidates,
            }));
            match selected {
                Ok(convention) => {
                    text.push_str(&format!("selected = {convention}\n"));
                    json["selected"] = json!(convention);
                    Ok(Outcome::ok(text, json))
                }
                Err(e) => {
                    json["selected"] = serde_json::Value::Null;
                    Ok(Outcome {
                        text,
                        json,
                        exit: EXIT_VERIFY_FAIL,
                        diagnostic: Some(format!("error: {e}")),
                    })
                }
            }
        }
    }
}

#[derive(Serialize)]
struct VerifyAttempt {
    seed: u64,
    mc: McMoments,
    mean_z: f64,
    variance_z: f64,
    pass: bool,
}

fn verify(
    config: &RunConfig,
    model: &WishartModel,
    spec: &MinorSpec,
    with_header: impl Fn(serde_json::Value) -> serde_json::Value,
) -> Result<Outcome> {
    let report = minor_variance(model, spec)?;
    let tolerance = config.tolerance_sigmas;
    let attempt = |seed: u64| -> Result<VerifyAttempt> {
        let mc = mc_moment_estimate(model, spec, config.reps, seed)?;
        let mean_z = mc.mean.z_score(report.mean);
        let variance_z = mc.variance.z_score(report.variance);
        Ok(VerifyAttempt {
            seed,
            mc,
            mean_z,
            variance_z,
            pass: mean_z <= tolerance && variance_z <= tolerance,
        })
    };

    let mut attempts = vec![attempt(config.seed)?];
    let first = &attempts[0];
    // A marginal miss (within one sigma of the band) gets one rerun.
    if !first.pass && first.mean_z.max(first.variance_z) <= tolerance + 1.0 {
        attempts.push(attempt(config.seed.wrapping_add(1))?);
    }
    let last = attempts.last().expect("at least one attempt");
    let pass = last.pass;
    let verdict = if pass { "PASS" } else { "FAIL" };

    let mut text = format!(
        "formula: mean = {}, variance = {}\n",
        report.mean, report.variance
    );
    for a in &attempts {
        text.push_str(&format!(
            "monte carlo (seed {}, reps {}): mean = {} ± {} (z = {:.3}), variance = {} ± {} (z = {:.3})\n",
            a.seed,
            config.reps,
            a.mc.mean.estimate,
            a.mc.mean.stderr,
            a.mean_z,
            a.mc.variance.estimate,
            a.mc.variance.stderr,
            a.variance_z
        ));
    }
    text.push_str(&format!("{verdict} at {tolerance} standard errors\n"));

    let json = with_header(json!({
        "reps": config.reps,
        "seed": config.seed,
        "tolerance_sigmas": tolerance,
        "formula_mean": report.mean,
        "formula_variance": report.variance,
        "attempts": attempts,
        "verdict": verdict,
    }));
    Ok(Outcome {
        text,
        json,
        exit: if pass { EXIT_SUCCESS } else { EXIT_VERIFY_FAIL },
        diagnostic: (!pass).then(|| {
            format!(
                "verification failed: z = {:.3} exceeds {tolerance}",
                last.mean_z.max(last.variance_z)
            )
        }),
    })
}
