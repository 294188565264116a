//! `onsager`: curvature, dynamics and geodesics of finite-state probability
//! manifolds from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::LoadedConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "onsager", version, about = "Geometry of reversible Markov chains on the probability simplex")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<String>,

    /// Built-in chain: `triangle-reaction` or `lattice3`.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Sweep grid resolution.
    #[arg(long, global = true, value_name = "R")]
    grid: Option<usize>,

    /// Seed for the randomized suites.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Curvature report (JSON) at one point.
    Analyze,
    /// Master equation trajectory (CSV).
    Simulate,
    /// Geodesic from an initial potential or between two points (CSV).
    Geodesic,
    /// Parallel transport along a geodesic (CSV).
    Transport,
    /// Sectional curvature over an interior grid of the three-state lattice (CSV).
    Sweep,
    /// Runs the cross-check suite and prints a pass/fail table.
    Validate,
}

fn load(path: Option<&str>) -> Result<LoadedConfig, CliError> {
    match path {
        None => Ok(LoadedConfig::empty()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {p}: {e}")))?;
            LoadedConfig::parse(text, p)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load(cli.config.as_deref())?;
    let out = config.output_path(cli.out.as_deref());
    let ctx = Context {
        config,
        preset: cli.preset,
        grid: cli.grid,
        seed: cli.seed,
    };
    let (text, failure) = match cli.command {
        Command::Analyze => commands::cmd_analyze(&ctx)?,
        Command::Simulate => (commands::cmd_simulate(&ctx)?, None),
        Command::Geodesic => (commands::cmd_geodesic(&ctx)?, None),
        Command::Transport => (commands::cmd_transport(&ctx)?, None),
        Command::Sweep => (commands::cmd_sweep(&ctx)?, None),
        Command::Validate => commands::cmd_validate(&ctx),
    };
    output::emit(&text, out.as_deref())?;
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
