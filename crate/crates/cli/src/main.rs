//! `rdl`: ingest event data, train, evaluate and run ablations.
//!
//! Exit codes: 0 success, 2 input error, 3 checkpoint/config mismatch,
//! 4 training stopped before convergence (partial results are kept).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rdl", version, about = "Spiking network with reward-modulated delay learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin event recordings (or generate a synthetic set) into a dataset file.
    Ingest(IngestArgs),
    /// Train layer 1, then the decision layer.
    Train(TrainArgs),
    /// Evaluate a checkpoint without learning.
    Eval(EvalArgs),
    /// Train the full model and single-mechanism variants side by side.
    Ablate(AblateArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// DVS128-Gesture directory (`userNN_*.aedat` plus `_labels.csv`).
    #[arg(required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub root: Option<PathBuf>,
    /// Synthetic pattern spec (JSON) instead of recordings.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long, default_value_t = 33.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 200)]
    pub max_frames: usize,
    /// Shrink both sensor axes by this factor.
    #[arg(long, default_value_t = 1)]
    pub downsample: u16,
    /// Synthetic training samples per class; defaults to the count in the pattern file.
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub test_per_class: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by every command that builds a configuration.
#[derive(Args)]
pub struct ConfigArgs {
    /// JSON run configuration; the synthetic preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set training.kappa=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Switch a mechanism off (repeatable).
    #[arg(long = "disable", value_name = "MECHANISM")]
    pub disable: Vec<String>,
    /// Epoch budget for each layer.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Dataset file written by `ingest`, replacing the configured source.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Configuration the checkpoint must be compatible with.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: commands::Split,
    /// Also evaluate on only the first x frames (repeatable).
    #[arg(long = "limit-frames", value_name = "X")]
    pub limit_frames: Vec<usize>,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Comma-separated variant names (M, M1..M6, no-decentralization,
    /// no-threshold) or `all`.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value = "ablation")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
