//! `dobrushin` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dobrushin_cli::{exit_code, run, Command};

#[derive(Debug, Parser)]
#[command(name = "dobrushin", version, about = "3D Ising interface laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, clap::Args)]
struct Io {
    /// JSON config, or the manifest of a previous run of the same command.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Run a heat-bath chain and store bit-packed snapshots.
    Sample(Io),
    /// Decompose stored snapshots into walls and pillars (NDJSON).
    Decompose(Io),
    /// Apply the pillar map to stored snapshots and audit it (NDJSON).
    Psi(Io),
    /// Run Monte Carlo estimators (CSV).
    Estimate(Io),
    /// Compare the maximum on a large box with maxima of small boxes (CSV).
    Multiscale(Io),
    /// Evaluate inequality checks on estimator tables (CSV).
    Report(Io),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, io) = match cli.command {
        Sub::Sample(io) => (Command::Sample, io),
        Sub::Decompose(io) => (Command::Decompose, io),
        Sub::Psi(io) => (Command::Psi, io),
        Sub::Estimate(io) => (Command::Estimate, io),
        Sub::Multiscale(io) => (Command::Multiscale, io),
        Sub::Report(io) => (Command::Report, io),
    };
    let result = run(command, &io.config, &io.out);
    match &result {
        Ok(o) => {
            println!("{}", io.out.join(dobrushin_cli::output::MANIFEST_NAME).display());
            if o.failed > 0 {
                eprintln!("error: {} check(s) failed", o.failed);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
