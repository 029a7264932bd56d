//! Command-line frontend. `run_cli` is the whole program minus process exit.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::engine::DynamicsModel;
use crate::protocol::builtin;
use crate::protocol::{validate_with_cap, Protocol, ValidatedProtocol, ValidationError, ValidationErrorKind};
use crate::protofile::{self, format_float, ParsedProtocol};
use crate::statevec::MAX_TOTAL_DIM;
use crate::trials::{bayes_factor, run_trials, trials_to_threshold, TrialError, TrialReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ENGINE: i32 = 2;
pub const EXIT_EXPECTATION: i32 = 3;

/// Environment variable that lowers the state-space dimension cap.
pub const MAX_DIM_ENV: &str = "WIGNERSIM_MAX_DIM";

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "wignersim", version, about = "Observer-inside-the-lab protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Monte Carlo trials of a protocol under one dynamics model
    Run(RunArgs),
    /// Check a protocol and print its step count
    Validate(SourceArgs),
    /// Print the canonical serialization of a protocol
    Canon(SourceArgs),
    /// Print a protocol with reverse ranges expanded into inverse steps
    Invert(SourceArgs),
    /// Trials needed for an all-returned run to reach a Bayes factor
    Distinguish {
        #[arg(long, value_name = "B")]
        bayes_factor: f64,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Protocol file in .wproto format
    #[arg(long, value_name = "FILE")]
    protocol: Option<PathBuf>,
    /// Built-in protocol: deutsch-wigner, which-outcome, photon-mirror, chain-N
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Unitary,
    Collapse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Write the report here instead of standard output
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// A failure already rendered for standard error, with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_INPUT
            } else {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, stdout, stderr),
        Command::Validate(src) => cmd_validate(&src, stdout),
        Command::Canon(src) => cmd_canon(&src, stdout),
        Command::Invert(src) => cmd_invert(&src, stdout),
        Command::Distinguish { bayes_factor } => cmd_distinguish(bayes_factor, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn io_failure(what: &str, e: io::Error) -> Failure {
    Failure::input(format!("{what}: {e}"))
}

/// Dimension cap after applying the environment override.
pub fn dimension_cap() -> Result<usize, String> {
    match std::env::var(MAX_DIM_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(MAX_TOTAL_DIM),
        Err(e) => Err(format!("{MAX_DIM_ENV}: {e}")),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(cap) if cap >= 1 => Ok(cap.min(MAX_TOTAL_DIM)),
            _ => Err(format!("{MAX_DIM_ENV} must be a positive integer, got {v:?}")),
        },
    }
}

enum Source {
    File { path: PathBuf, parsed: ParsedProtocol },
    Builtin(Protocol),
}

impl Source {
    fn protocol(&self) -> &Protocol {
        match self {
            Source::File { parsed, .. } => &parsed.protocol,
            Source::Builtin(p) => p,
        }
    }

    /// Validation message, located in the file when there is one.
    fn describe(&self, e: &ValidationError) -> String {
        let Source::File { path, parsed } = self else {
            return e.to_string();
        };
        let span = match (e.step, &e.kind) {
            (Some(k), _) => parsed.step_spans.get(k - 1).copied(),
            (None, ValidationErrorKind::Init(_)) => Some(parsed.init_span),
            (None, _) => Some(parsed.registers_span),
        };
        match span {
            Some(s) => format!("{}:{}:{}: {e}", path.display(), s.line, s.column),
            None => format!("{}: {e}", path.display()),
        }
    }
}

fn load(src: &SourceArgs) -> Result<Source, Failure> {
    if let Some(path) = &src.protocol {
        let bytes = fs::read(path).map_err(|e| io_failure(&path.display().to_string(), e))?;
        let parsed = protofile::parse_bytes(&bytes).map_err(|e| {
            Failure::input(format!(
                "{}:{}:{}: {}",
                path.display(),
                e.span.line,
                e.span.column,
                e.kind
            ))
        })?;
        return Ok(Source::File {
            path: path.clone(),
            parsed,
        });
    }
    let name = src.builtin.as_deref().expect("clap enforces one source");
    builtin(name)
        .map(Source::Builtin)
        .map_err(|e| Failure::input(e.to_string()))
}

fn load_valid(src: &SourceArgs) -> Result<(Source, ValidatedProtocol), Failure> {
    let source = load(src)?;
    let cap = dimension_cap().map_err(Failure::input)?;
    let vp = validate_with_cap(source.protocol(), cap).map_err(|e| Failure::input(source.describe(&e)))?;
    Ok((source, vp))
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(&path.display().to_string(), e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| io_failure("standard output", e)),
    }
}

fn cmd_validate(src: &SourceArgs, stdout: &mut dyn Write) -> Outcome {
    let (_, vp) = load_valid(src)?;
    emit(None, stdout, &format!("ok {} steps\n", vp.protocol().steps.len()))?;
    Ok(EXIT_OK)
}

fn cmd_canon(src: &SourceArgs, stdout: &mut dyn Write) -> Outcome {
    let (_, vp) = load_valid(src)?;
    emit(None, stdout, &protofile::serialize(vp.protocol()))?;
    Ok(EXIT_OK)
}

fn cmd_invert(src: &SourceArgs, stdout: &mut dyn Write) -> Outcome {
    let (source, vp) = load_valid(src)?;
    let expanded = vp
        .protocol()
        .expand_reverses()
        .map_err(|e| Failure::input(source.describe(&e)))?;
    emit(None, stdout, &protofile::serialize(&expanded))?;
    Ok(EXIT_OK)
}

fn cmd_distinguish(threshold: f64, stdout: &mut dyn Write) -> Outcome {
    let n = trials_to_threshold(threshold).map_err(|e| Failure::input(e.to_string()))?;
    let mut text = format!("trials_to_threshold {n}\nn\tbayes_factor\n");
    for k in 1..=u64::from(n) {
        let bf = bayes_factor(k, k).expect("k <= n");
        text.push_str(&format!("{k}\t{}\n", format_float(bf)));
    }
    emit(None, stdout, &text)?;
    Ok(EXIT_OK)
}

fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let (_, vp) = load_valid(&args.source)?;
    let model = match args.model {
        ModelArg::Unitary => DynamicsModel::unitary(),
        ModelArg::Collapse => DynamicsModel::collapse(),
    };
    let report = run_trials(&vp, &model, args.trials, args.seed).map_err(|e| match e {
        TrialError::NoTrials => Failure::input(e.to_string()),
        other => Failure {
            code: EXIT_ENGINE,
            message: other.to_string(),
        },
    })?;
    let text = match args.format {
        FormatArg::Json => report_json(&report),
        FormatArg::Tsv => report_tsv(&report),
    };
    emit(args.out.as_deref(), stdout, &text)?;
    let mut code = EXIT_OK;
    for e in report.expectations.iter().filter(|e| !e.pass) {
        let _ = writeln!(
            stderr,
            "expectation at step {} failed: observed {} against target {} (tol {})",
            e.step,
            format_float(e.observed_prob),
            format_float(e.target_prob),
            format_float(e.tol)
        );
        code = EXIT_EXPECTATION;
    }
    Ok(code)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    format_version: u32,
    protocol: &'a str,
    model: &'a str,
    trials: u64,
    seed: u64,
    histogram: Vec<JsonBin<'a>>,
    expectations: Vec<JsonExpectation>,
    return_rate: f64,
    /// `null` when the factor overflows `f64`.
    bayes_factor: Option<f64>,
    wall_ms: u64,
}

#[derive(Serialize)]
struct JsonBin<'a> {
    outcome: &'a [usize],
    count: u64,
}

#[derive(Serialize)]
struct JsonExpectation {
    step: usize,
    target_prob: f64,
    observed_prob: f64,
    tol: f64,
    pass: bool,
}

/// JSON report text, newline-terminated.
pub fn report_json(r: &TrialReport) -> String {
    let doc = JsonReport {
        format_version: FORMAT_VERSION,
        protocol: &r.protocol,
        model: r.model.as_str(),
        trials: r.trials,
        seed: r.seed,
        histogram: r
            .histogram
            .iter()
            .map(|(outcome, count)| JsonBin { outcome, count: *count })
            .collect(),
        expectations: r
            .expectations
            .iter()
            .map(|e| JsonExpectation {
                step: e.step,
                target_prob: e.target_prob,
                observed_prob: e.observed_prob,
                tol: e.tol,
                pass: e.pass,
            })
            .collect(),
        return_rate: r.return_rate,
        bayes_factor: r.bayes_factor.is_finite().then_some(r.bayes_factor),
        wall_ms: r.wall_ms,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

/// TSV histogram: header of measured register names then `count`.
pub fn report_tsv(r: &TrialReport) -> String {
    let mut header: Vec<&str> = r.measured.iter().map(String::as_str).collect();
    header.push("count");
    let mut text = header.join("\t");
    text.push('\n');
    for (outcome, count) in &r.histogram {
        for v in outcome {
            text.push_str(&v.to_string());
            text.push('\t');
        }
        text.push_str(&count.to_string());
        text.push('\n');
    }
    text
}
