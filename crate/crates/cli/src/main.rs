//! `netobserve`: structural functional observability, sensor placement,
//! observer synthesis and the demo pipelines from the command line.

mod commands;
mod config;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "netobserve", version, about = "Functional observability of dynamical networks")]
struct Cli {
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a small-world or scale-free network as an edge list.
    Netgen(commands::NetgenArgs),
    /// Decide structural (and optionally numeric) functional observability.
    Check(commands::CheckArgs),
    /// Choose sensors that make the targets functionally observable.
    Place(commands::PlaceArgs),
    /// Synthesize a functional or Luenberger observer.
    Design(commands::DesignArgs),
    /// Co-simulate a plant and its observer and write the trace.
    Simulate(commands::SimulateArgs),
    /// Deception-attack detection on a power grid.
    Powergrid(commands::PowergridArgs),
    /// Epidemic peak prediction with a nonlinear functional observer.
    Epidemic(commands::EpidemicArgs),
    /// Time the minimal-F0 search across system sizes.
    Bench(commands::BenchArgs),
}

fn run(cli: Cli) -> error::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Netgen(a) => commands::netgen(&cfg, &a),
        Command::Check(a) => commands::check(&cfg, &a),
        Command::Place(a) => commands::place(&cfg, &a),
        Command::Design(a) => commands::design(&cfg, &a),
        Command::Simulate(a) => commands::simulate(&cfg, &a),
        Command::Powergrid(a) => commands::powergrid(&cfg, &a),
        Command::Epidemic(a) => commands::epidemic(&cfg, &a),
        Command::Bench(a) => commands::bench(&cfg, &a),
    }
}

fn main() -> ExitCode {
    // clap reports bad flags with exit code 2 and help/version with 0.
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netobserve: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
