mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nondense_core::Error;

use crate::commands::{CmdOutput, Flags};
use crate::config::{FieldError, Format, RunConfig};
use crate::output::{ErrorInfo, RunReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_DEGENERATE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nondense",
    version,
    about = "Experiments on diagonal flows and badly approximable systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config field, e.g. `-p c=0.3` or `-p budgets.box_cap=1000`.
    #[arg(short = 'p', long = "param", global = true, value_name = "KEY=VALUE")]
    params: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Check shortest vectors against exhaustive search (`delta`).
    #[arg(long, global = true)]
    brute: bool,

    /// Compare with the continued-fraction oracle (`dim`).
    #[arg(long, global = true)]
    oracle: bool,

    /// Leave the wall time out of the report.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Shortest vector and delta, delta_{i,j} of a basis.
    Delta,
    /// Dynamical and direct badly-approximable tests side by side.
    Bad,
    /// delta_{i,j} along the orbit g_t u_A Z^d.
    Orbit,
    /// Haar estimate of mu(U(eps)) against the Siegel prediction.
    Mu,
    /// Cusp fractions of expanded unipotent pieces and their scaling.
    Nondiv,
    /// Survivor cover and the tile count sweep.
    Cover,
    /// Box-counting dimension of a cover or of given counts.
    Dim,
    /// Dimension of continued fractions with digits at most N.
    OracleCf,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Delta => "delta",
            Command::Bad => "bad",
            Command::Orbit => "orbit",
            Command::Mu => "mu",
            Command::Nondiv => "nondiv",
            Command::Cover => "cover",
            Command::Dim => "dim",
            Command::OracleCf => "oracle-cf",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateFit(_) | Error::Domain(_) => EXIT_DEGENERATE,
        Error::BudgetExceeded { .. }
        | Error::EnumerationBudgetExceeded { .. }
        | Error::SamplerStall(_) => EXIT_BUDGET,
        _ => EXIT_VALIDATION,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        EXIT_DEGENERATE => "degenerate",
        EXIT_BUDGET => "budget",
        _ => "invalid",
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<Result<RunConfig, FieldError>> {
    let text = match &cli.config {
        Some(p) => {
            Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let mut cfg = match config::load(text.as_deref(), &cli.params) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.display().to_string());
    }
    cfg.resolve(cli.command);
    Ok(cfg.validate(cli.command).map(|_| cfg))
}

fn dispatch(cmd: Command, cfg: &RunConfig, flags: &Flags) -> Result<CmdOutput, Error> {
    match cmd {
        Command::Delta => commands::delta(cfg, flags),
        Command::Bad => commands::bad(cfg),
        Command::Orbit => commands::orbit(cfg),
        Command::Mu => commands::mu(cfg),
        Command::Nondiv => commands::nondiv(cfg),
        Command::Cover => commands::cover(cfg),
        Command::Dim => commands::dim(cfg, flags),
        Command::OracleCf => commands::oracle_cf(cfg),
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = match build_config(&cli)? {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_VALIDATION);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: invalid flag `--threads`: must be at least 1");
            return Ok(EXIT_VALIDATION);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    let flags = Flags {
        brute: cli.brute,
        oracle: cli.oracle,
    };
    let start = Instant::now();
    let result = dispatch(cli.command, &cfg, &flags);
    let wall = (!cli.no_timestamp).then(|| start.elapsed().as_secs_f64());

    let (code, out, error) = match result {
        Ok(o) => (
            if o.inconclusive {
                EXIT_DEGENERATE
            } else {
                EXIT_OK
            },
            Some(o),
            None,
        ),
        Err(e) => {
            eprintln!("error: {e}");
            let info = ErrorInfo {
                kind: error_kind(&e),
                message: e.to_string(),
            };
            (exit_code(&e), None, Some(info))
        }
    };
    for w in out.iter().flat_map(|o| &o.warnings) {
        eprintln!("warning: {w}");
    }
    let text = match (cfg.output.format, &out) {
        (Format::Csv, Some(o)) => o.table.to_csv(),
        (Format::Csv, None) => String::new(),
        (Format::Json, _) => {
            let status = match code {
                EXIT_OK => "ok",
                EXIT_DEGENERATE => "inconclusive",
                EXIT_BUDGET => "budget_exceeded",
                _ => "invalid",
            };
            let (outputs, warnings) = match out {
                Some(o) => (o.outputs, o.warnings),
                None => (serde_json::Value::Null, Vec::new()),
            };
            RunReport {
                command: cli.command.name(),
                version: output::version(),
                status,
                exit_code: code as i32,
                wall_time_s: wall,
                config: cfg.clone(),
                outputs,
                warnings,
                error,
            }
            .to_json()
        }
    };
    if !text.is_empty() {
        match &cfg.output.path {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {p}"))?,
            None => print!("{text}"),
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
