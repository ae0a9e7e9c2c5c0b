//! Batch front end for the `dobrushin` crate.
//!
//! Commands (`sample`, `decompose`, `psi`, `estimate`, `multiscale`,
//! `report`) read a JSON config, expand its defaults, and write their
//! outputs atomically into a directory together with a `manifest.json`
//! that records the tool version, the config hash, the seed and a SHA-256
//! of every output. Passing a manifest as `--config` re-runs the command
//! and reproduces the outputs byte for byte.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod snapshot;

use std::path::Path;

use clap::ValueEnum;

pub use commands::Outcome;
pub use error::CliError;

/// The command names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Sample,
    Decompose,
    Psi,
    Estimate,
    Multiscale,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Decompose => "decompose",
            Command::Psi => "psi",
            Command::Estimate => "estimate",
            Command::Multiscale => "multiscale",
            Command::Report => "report",
        }
    }
}

/// Load the config for `command` from `config` and run it into `out`.
pub fn run(command: Command, config: &Path, out: &Path) -> Result<Outcome, CliError> {
    use config::load;
    let name = command.name();
    match command {
        Command::Sample => commands::sample(&load(config, name)?, out),
        Command::Decompose => commands::decompose_cmd(&load(config, name)?, out),
        Command::Psi => commands::psi_cmd(&load(config, name)?, out),
        Command::Estimate => commands::estimate_cmd(&load(config, name)?, out),
        Command::Multiscale => commands::multiscale_cmd(&load(config, name)?, out),
        Command::Report => commands::report_cmd(&load(config, name)?, out),
    }
}

/// Exit status of a finished command: 0, or 3 when checks failed.
pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(o) if o.failed > 0 => error::EXIT_CHECK_FAILED,
        Ok(_) => error::EXIT_OK,
        Err(e) => e.exit_code(),
    }
}
