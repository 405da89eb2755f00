//! Penalty-kick direction anticipation pipeline CLI.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, Overrides, PoolingChoice};
use spotkick_core::dataset::LabelRegime;

/// Exit 1: input or validation problem. Exit 2: runtime failure.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            code: 1,
        }
    }

    pub fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            message: message.into(),
            code: 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn parse_regime(s: &str) -> Result<LabelRegime, String> {
    match s {
        "two" => Ok(LabelRegime::TwoClass),
        "three" => Ok(LabelRegime::ThreeClass),
        _ => Err(format!("unknown regime `{s}` (expected `two` or `three`)")),
    }
}

fn parse_pooling(s: &str) -> Result<PoolingChoice, String> {
    PoolingChoice::parse(s)
        .ok_or_else(|| format!("unknown pooling `{s}` (expected `avg`, `max`, or `auto`)"))
}

#[derive(Parser)]
#[command(
    name = "spotkick",
    version,
    about = "Penalty-kick direction anticipation: preprocess clips, extract embeddings, train and evaluate the fusion classifier"
)]
struct Cli {
    /// Run configuration file
    #[arg(long, global = true, default_value = "spotkick.toml")]
    config: PathBuf,

    /// Override the run seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-clip and per-variant work
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Label regime: `two` or `three`
    #[arg(long, global = true, value_parser = parse_regime)]
    regime: Option<LabelRegime>,

    /// Pooling: `avg`, `max`, or `auto`
    #[arg(long, global = true, value_parser = parse_pooling)]
    pooling: Option<PoolingChoice>,
}

#[derive(Subcommand)]
enum Command {
    /// Composite kicker boxes onto average frames and split stages
    Preprocess,
    /// Extract chunk embeddings into the binary cache
    Embed,
    /// Run stratified cross-validation and write metric tables
    Evaluate,
    /// Aggregate variant metrics into per-family distribution summaries
    Report,
}

#[derive(Parser)]
struct CliWithCommand {
    #[command(flatten)]
    common: Cli,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = CliWithCommand::parse();
    let overrides = Overrides {
        seed: cli.common.seed,
        jobs: cli.common.jobs,
        regime: cli.common.regime,
        pooling: cli.common.pooling,
    };
    let result = load_config(&cli.common.config, &overrides).and_then(|config| {
        match cli.command {
            Command::Preprocess => commands::preprocess::run(&config),
            Command::Embed => commands::embed::run(&config),
            Command::Evaluate => commands::evaluate::run(&config),
            Command::Report => commands::report::run(&config),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
