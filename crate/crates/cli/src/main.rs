//! `selfdual`: batch front-end for the self-dual polar factorization.
//!
//! Exit codes: 0 success, 1 a solver hit its iteration cap, 2 invalid
//! configuration or input, 3 unreadable or unwritable file.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "selfdual", version, about = "Self-dual polar factorization of sampled vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: dual and primal solves, regularization, report.
    Decompose(Flags),
    /// Involution solve only.
    Dual(Flags),
    /// Hamiltonian solve only.
    Primal(Flags),
    /// Checks a given involution and/or kernel without solving.
    Verify(Flags),
    /// Pair-measure atoms and transport cost identities.
    Transport(Flags),
    /// Every builtin at N in {16, 32, 64}.
    Gallery(Flags),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SELFDUAL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Schema(format!("SELFDUAL_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Schema(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let (flags, f): (&Flags, fn(&RunConfig) -> Result<bool, CliError>) = match &cli.command {
        Command::Decompose(f) => (f, commands::decompose),
        Command::Dual(f) => (f, commands::dual),
        Command::Primal(f) => (f, commands::primal),
        Command::Verify(f) => (f, commands::verify),
        Command::Transport(f) => (f, commands::transport),
        Command::Gallery(f) => (f, commands::gallery),
    };
    let cfg = RunConfig::resolve(flags)?;
    if !matches!(cli.command, Command::Gallery(_)) && !cfg.has_field_source() {
        return Err(CliError::Schema("no field source: pass --builtin or --field with --domain".into()));
    }
    f(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("selfdual: a solver stopped at its iteration cap before converging");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("selfdual: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
