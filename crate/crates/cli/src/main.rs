use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;
mod run;

/// Full-text MeSH indexing pipeline.
#[derive(Debug, Parser)]
#[command(name = "ftmesh", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parsing, prediction and evaluation (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, env = "FTMESH_OUTPUT_DIR", default_value = "out", global = true)]
    output_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Join BioC full texts with MEDLINE citations into a record file.
    BuildCorpus(BuildCorpusArgs),
    /// Per-section article counts and mean lengths.
    Stats(StatsArgs),
    /// Year-stratified train/validation/test split.
    Split(SplitArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Score documents with a trained model.
    Predict(PredictArgs),
    /// Tune per-label decision thresholds on scored documents.
    TuneThresholds(TuneArgs),
    /// Bipartition and ranking metrics against gold labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct BuildCorpusArgs {
    #[arg(long)]
    bioc_dir: PathBuf,
    #[arg(long)]
    medline_dir: PathBuf,
    /// Inputs above this size are joined through on-disk partitions.
    #[arg(long)]
    memory_budget_mb: Option<u64>,
    #[arg(long)]
    partitions: Option<usize>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    records: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    records: PathBuf,
    /// Train, validation and test fractions, comma separated.
    #[arg(long, value_name = "TRAIN,VAL,TEST")]
    ratios: Option<String>,
    /// Keep only records that have every section.
    #[arg(long)]
    complete_only: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Descriptor table: `ui \t name \t tree;numbers` per line.
    #[arg(long)]
    descriptors: PathBuf,
    /// Pretrained word vectors in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    /// Also write every label score per document.
    #[arg(long)]
    full_scores: bool,
    /// Add thresholded label sets to the predictions.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
    #[arg(long)]
    max_sweeps: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    scores: Option<PathBuf>,
    /// Predictions with label sets, as written by `predict --thresholds`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
    /// Per-label thresholds for `--scores`; 0.5 everywhere when absent.
    #[arg(long, requires = "scores")]
    thresholds: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let run = run::RunConfig::resolve(&cli.common)?;
    run.init_workers()?;
    match cli.command {
        Command::BuildCorpus(a) => commands::build_corpus(&run, a),
        Command::Stats(a) => commands::stats(&run, a),
        Command::Split(a) => commands::split(&run, a),
        Command::Train(a) => commands::train(&run, a),
        Command::Predict(a) => commands::predict(&run, a),
        Command::TuneThresholds(a) => commands::tune(&run, a),
        Command::Evaluate(a) => commands::evaluate(&run, a),
    }
}
