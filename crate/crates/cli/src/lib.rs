//! Batch front end: one experiment config, one subcommand per attack phase.

pub mod commands;
pub mod config;
pub mod exit;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Resolved};
pub use exit::{CliError, ExitCode};

#[derive(Debug, Parser)]
#[command(name = "dla-intercept", version, about = "Input-interception Trojan experiments on a simulated DLA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `outputDir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Profile the watched layer: stats JSON and histogram CSV.
    Profile,
    /// Forge trigger bands and estimate their trigger rate.
    Forge,
    /// Run the compromised pipeline over the stream.
    Attack,
    /// Evaluate the configured defense.
    Defend,
    /// Run every phase and write a summary.
    Report,
}

pub fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(ExitCode::Config, format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ExperimentConfig::from_json(&text)?.resolve(&base, seed, out)
}

/// Run one subcommand; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let Some(config) = &cli.config else {
        return Err(CliError::new(ExitCode::Config, "--config is required"));
    };
    let resolved = load_config(config, cli.seed, cli.out.clone())?;
    if cli.command == Command::Defend && resolved.config.defense.is_none() {
        return Err(CliError::new(ExitCode::Config, "defense: section is required for defend"));
    }
    let ctx = commands::Context::load(&resolved)?;
    match cli.command {
        Command::Profile => commands::profile(&resolved, &ctx),
        Command::Forge => commands::forge(&resolved, &ctx),
        Command::Attack => commands::attack(&resolved, &ctx).map(|(w, _)| w),
        Command::Defend => {
            let (written, report) = commands::defend(&resolved, &ctx)?;
            commands::inconclusive_exit(&report)?;
            Ok(written)
        }
        Command::Report => commands::report(&resolved, &ctx),
    }
}
