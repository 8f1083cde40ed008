//! `socialrec`: ingest rating/trust data, train and evaluate the model, and
//! run hyperparameter, ablation and gradient-check experiments.
//!
//! Exit codes: 0 success, 1 check or runtime failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ModelFlags, TrainFlags};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<socialrec::Error> for CliError {
    fn from(e: socialrec::Error) -> Self {
        let code = if e.is_usage() { 2 } else { 1 };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "socialrec",
    version,
    about = "Graph-based social recommendation with consistency-aware neighbor sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse rating and trust files into a dataset directory.
    Ingest(IngestArgs),
    /// Train a model and write its best checkpoint and history.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Train over a hyperparameter grid.
    Gridsearch(GridArgs),
    /// Compare the full model against its three ablated variants.
    Ablate(AblateArgs),
    /// Vary one hyperparameter around the base configuration.
    Sensitivity(SensitivityArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    trust: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    splits: String,
    #[arg(long, default_value = "tsv3")]
    format: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Write wall-clock seconds to the history (makes it non-reproducible).
    #[arg(long)]
    record_elapsed: bool,
    /// Clamp predictions to the rating range when reporting test metrics.
    #[arg(long)]
    clip_predictions: bool,
    /// Also write the graph as `graph.tsv`.
    #[arg(long)]
    dump_graph: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Defaults to the value stored with the checkpoint.
    #[arg(long)]
    item_link_threshold: Option<f64>,
    #[arg(long)]
    clip_predictions: bool,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train a seeded random subset of this many grid points.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    learning_rates: Option<String>,
    #[arg(long)]
    batch_sizes: Option<String>,
    #[arg(long)]
    layer_counts: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// gamma, d, lr or batch.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long)]
    values: String,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding size; fixes the scale of every instance.
    #[arg(long)]
    d: Option<usize>,
    /// Total users plus items.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Number of instances (default 20, or 8 at a fixed scale).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = socialrec::gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, hide = true)]
    corrupt: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Gridsearch(a) => commands::gridsearch(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
