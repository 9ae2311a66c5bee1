//! `shapeword` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use shapeword::model::AblationVariant;
use shapeword::Error;

#[derive(Debug, Parser)]
#[command(name = "shapeword", version, about = "Shapelet-based discretization and multi-scale classification of time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset with planted class motifs.
    Synth(SynthArgs),
    /// Stratified train/test split of a dataset file.
    Split(SplitArgs),
    /// Select shapelets and cluster them into a ShapeWord vocabulary.
    FitVocab(FitVocabArgs),
    /// Turn a dataset into a multi-scale token corpus.
    Discretize(DiscretizeArgs),
    /// Train a classifier on a corpus.
    Train(TrainArgs),
    /// Score a trained model on a corpus.
    Evaluate(EvaluateArgs),
    /// Train and score one model variant on a dataset.
    Ablate(AblateArgs),
    /// Score the full pipeline over a range of one hyper-parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    motif: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct FitVocabArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ShapeWord versus shapelet quality comparison.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    /// Words per variable and scale; defaults to the class count.
    #[arg(long)]
    words: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    per_class_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
struct DiscretizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to every scale of the vocabulary.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    out_history: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Metrics JSON destination; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct AblateArgs {
    /// Training data, or the whole dataset when `--test-data` is absent.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: AblationVariant,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepParam {
    Lambda,
    Scales,
    Words,
    Length,
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_variant(s: &str) -> Result<AblationVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Split(a) => commands::split(a),
        Command::FitVocab(a) => commands::fit_vocab(a),
        Command::Discretize(a) => commands::discretize(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
