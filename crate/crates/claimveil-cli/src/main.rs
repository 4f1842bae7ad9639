//! Operator surface for adversarial claim-rewriting campaigns.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use claimveil::model::Variant;
use config::load_config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

#[derive(Parser)]
#[command(name = "claimveil", version, about = "Adversarial claim rewriting against black-box misinformation detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Campaign configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value by dotted path, e.g. `--set budget=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root; artifacts land in `<out>/<campaign_id>/`.
    #[arg(long, default_value = "campaign")]
    out: PathBuf,
    /// Attack variant: full | prev | attacker-only.
    #[arg(long)]
    variant: Option<String>,
    /// Victim query budget per claim.
    #[arg(long)]
    budget: Option<u32>,
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a rewriting campaign and persist transcripts.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip claims that already have a terminal transcript.
        #[arg(long)]
        resume: bool,
    },
    /// Simplify winning rewrites and re-score them against the detector.
    Defend {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compute the comparison battery over winning rewrites.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Select similarity thresholds from human annotations.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Render all campaign artifacts into a readable summary.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_variant(token: &str) -> Result<Variant, CliError> {
    match token {
        "full" | "full_history" | "full-history" => Ok(Variant::FullHistory),
        "prev" | "previous" | "previous_only" | "previous-only" => Ok(Variant::PreviousOnly),
        "attacker-only" | "attacker_only" | "attacker" => Ok(Variant::AttackerOnly),
        other => Err(CliError::Config(vec![format!(
            "unknown variant {other:?} (expected full | prev | attacker-only)"
        )])),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common, resume) = match &cli.command {
        Command::Attack { common, resume } => ("attack", common, *resume),
        Command::Defend { common } => ("defend", common, false),
        Command::Analyze { common } => ("analyze", common, false),
        Command::Calibrate { common } => ("calibrate", common, false),
        Command::Report { common } => ("report", common, false),
    };

    let mut config = load_config(&common.config, &common.overrides)?;
    if let Some(v) = &common.variant {
        config.variant = parse_variant(v)?;
    }
    if let Some(b) = common.budget {
        config.budget = b;
    }
    if let Some(s) = common.seed {
        config.sampling.seed = s;
    }
    // Validation completes before any provider or detector is constructed,
    // so no network traffic can precede it.
    config.validate_for(name)?;

    match name {
        "attack" => commands::attack(&config, &common.out, resume),
        "defend" => commands::defend(&config, &common.out),
        "analyze" => commands::analyze(&config, &common.out),
        "calibrate" => commands::calibrate(&config, &common.out),
        "report" => commands::report(&config, &common.out),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
