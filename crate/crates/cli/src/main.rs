// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{Context, Failure};

/// Chirp-pulse isotropic mixing simulations for a coupled spin pair.
#[derive(Parser)]
#[command(name = "chirpmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML); the built-in default when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration entry, e.g. `--set spins.J_hz=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for `scan` (default: all logical cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Run even when the sweep is far from adiabatic.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled four-sweep supercycle.
    Waveform,
    /// Zero- and double-quantum coupling built up over one sweep.
    Eta,
    /// Transfer efficiency against mixing time for each offset pair.
    Buildup,
    /// Best transfer over an offset grid, chirp against the composite sequence.
    Scan,
    /// Self-consistency checks; exits with 1 if any fails.
    Verify,
    /// Print the effective configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config::load(cli.config.as_deref(), &cli.set) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Context {
        out: cli.out.unwrap_or_else(|| cfg.config.output.dir.clone()),
        cfg,
        jobs: cli.jobs,
        force: cli.force,
    };
    let result = match cli.command {
        Command::Waveform => commands::waveform(&ctx),
        Command::Eta => commands::eta(&ctx),
        Command::Buildup => commands::buildup(&ctx),
        Command::Scan => commands::scan(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Config => commands::show_config(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
