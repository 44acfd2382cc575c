//! Command-line front end for the detector-array click statistics library.
//!
//! Every computation the library offers is exposed as a subcommand that
//! emits a CSV or JSON table — enough to re-plot the finite-size scaling
//! and temporal-multiplexing figures from the emitted data alone. Output
//! is deterministic: fixed row order, fixed float formatting, a seed flag
//! for the Monte Carlo paths, and no timestamps.
//!
//! Exit codes: 0 success, 1 validation failure (fit rejected, selftest
//! mismatch), 2 argument error, 3 capability error (work bound exceeded,
//! exact arithmetic unavailable).

mod batch;
mod commands;
mod output;
mod parse;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clickcounter::EvalMode;

use crate::batch::{cmd_batch, BatchArgs};
use crate::commands::{
    cmd_dist, cmd_error, cmd_finite_size_sweep, cmd_mc_validate, cmd_selftest, cmd_temporal,
    DistArgs, ErrorArgs, FiniteSizeArgs, McArgs, SelftestArgs, TemporalArgs,
};
use crate::output::{Format, Table};

#[derive(Parser, Debug)]
#[command(
    name = "clickcounter",
    version,
    about = "Click statistics of uniformly illuminated single-photon detector arrays"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Evaluation mode: fast (floating point), exact (rational), or auto.
    #[arg(long, global = true, default_value = "auto")]
    mode: EvalMode,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Write output to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread count (defaults to all cores).
    #[arg(long, global = true, env = "CLICKCOUNTER_THREADS")]
    threads: Option<usize>,

    /// RNG seed for the Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Click-count distribution for fixed m, n, eta, p_d.
    Dist(DistArgs),
    /// Total detection error and its dark-count / finite-size / efficiency parts.
    Error(ErrorArgs),
    /// Finite-size error sweep over photon number and array size.
    FiniteSizeSweep(FiniteSizeArgs),
    /// Temporally multiplexed array sweep with per-m optimal coupler depth.
    Temporal(TemporalArgs),
    /// Validate the closed form against seeded Monte Carlo sampling.
    McValidate(McArgs),
    /// Cross-check the closed form against the brute-force oracle.
    Selftest(SelftestArgs),
    /// Run a sweep described by a JSON spec file.
    Batch(BatchArgs),
}

/// Everything that can go wrong, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Core(clickcounter::Error),
    Io(std::io::Error),
    Invalid(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<clickcounter::Error> for CliError {
    fn from(e: clickcounter::Error) -> CliError {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                clickcounter::Error::WorkBoundExceeded { .. }
                | clickcounter::Error::ExactUnavailable(_) => 3,
                clickcounter::Error::Mismatch(_) => 1,
                _ => 2,
            },
            CliError::Io(_) | CliError::Invalid(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("cannot configure thread pool: {e}")))?;
    }

    let (table, code, format, out) = match &cli.command {
        Cmd::Dist(args) => with_cli_output(cmd_dist(args, cli.mode)?, cli),
        Cmd::Error(args) => with_cli_output(cmd_error(args, cli.mode)?, cli),
        Cmd::FiniteSizeSweep(args) => with_cli_output(cmd_finite_size_sweep(args, cli.mode)?, cli),
        Cmd::Temporal(args) => with_cli_output(cmd_temporal(args, cli.mode)?, cli),
        Cmd::McValidate(args) => with_cli_output(cmd_mc_validate(args, cli.mode, cli.seed)?, cli),
        Cmd::Selftest(args) => with_cli_output(cmd_selftest(args)?, cli),
        Cmd::Batch(args) => {
            let (table, code, overrides) = cmd_batch(args, cli.mode, cli.seed)?;
            let format = overrides.format.unwrap_or(cli.format);
            let out = overrides.out.or_else(|| cli.out.clone());
            (table, code, format, out)
        }
    };

    let rendered = table.render(format);
    match out {
        Some(path) => std::fs::write(path, rendered)?,
        None => std::io::stdout().write_all(rendered.as_bytes())?,
    }
    Ok(code)
}

fn with_cli_output(result: (Table, u8), cli: &Cli) -> (Table, u8, Format, Option<PathBuf>) {
    (result.0, result.1, cli.format, cli.out.clone())
}
