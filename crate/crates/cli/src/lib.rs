//! Command-line front end: TOML config in, CSV tables out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::Parser;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, EXIT_INVARIANT, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "prestrain",
    version,
    about = "Reduce prestrained thin sheets to plate models and check the reduction"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for CSV tables.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses the library default.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Load the config, apply overrides, run, and write tables. Returns the exit code.
pub fn execute(cli: &Cli) -> i32 {
    match try_execute(cli.command, &cli.config, &cli.out, cli.seed, cli.threads) {
        Ok(run) => {
            for path in &run.written {
                println!("wrote {}", path.display());
            }
            if run.failures.is_empty() {
                return EXIT_OK;
            }
            for f in &run.failures {
                eprintln!("invariant failed: {f}");
            }
            EXIT_INVARIANT
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// What a completed run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Executed {
    pub written: Vec<PathBuf>,
    /// Failed invariants; empty on success.
    pub failures: Vec<String>,
}

/// Run one command end to end.
pub fn try_execute(
    command: Command,
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<Executed, CliError> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    let outcome = prestrain_core::par::with_threads(cfg.threads, || commands::run(command, &cfg))?;
    let preamble = output::preamble(cfg.seed, &cfg.hash());
    output::write_tables(out, &outcome.tables, &preamble)?;
    Ok(Executed {
        written: outcome
            .tables
            .iter()
            .map(|t| out.join(format!("{}.csv", t.name)))
            .collect(),
        failures: outcome.invariant_failures,
    })
}
