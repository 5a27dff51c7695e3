//! `varipro run <command> --config <file> --out <dir>`
//!
//! Exit status: 0 on success, 2 when a solver stopped at its iteration cap,
//! 1 on any error.

mod commands;
mod config;
mod error;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Command, Outcome, Run};
use error::CliError;

/// Reconstruction experiments for variational and data-driven inverse problems.
#[derive(Parser, Debug)]
#[command(name = "varipro", version, about)]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand, Debug)]
enum Action {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(value_enum)]
        command: Command,
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Seed for every random draw of the run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validate the config and exit without solving.
        #[arg(long)]
        dry_run: bool,
    },
}

/// Caps the rayon pool from `VARIPRO_THREADS`.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VARIPRO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::field("VARIPRO_THREADS", format!("expected a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::field("VARIPRO_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Action::Run { command, config, out, seed, dry_run } = cli.action;
    let result = init_threads().and_then(|()| {
        let loaded = config::load(&config)?;
        let run = Run { loaded: &loaded, out: &out, seed, dry_run };
        commands::execute(command, &run)
    });
    match result {
        Ok(_) if dry_run => {
            println!("config ok: {}", config.display());
            ExitCode::SUCCESS
        }
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::MaxIters) => {
            log::warn!("stopped at the iteration cap before reaching the tolerance");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
