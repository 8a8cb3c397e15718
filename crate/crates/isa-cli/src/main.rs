//! `isa` — command-line surface for the sequence representation toolkit.
//!
//! Commands compose through files only: generated datasets, checkpoints,
//! representation files and reports. Every artifact-producing run writes a
//! manifest sufficient to reproduce it. Exit codes: 0 success, 1 usage
//! error, 2 data error, 3 numeric failure.

mod commands;
mod manifest;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use isa_core::Error;

#[derive(Parser)]
#[command(
    name = "isa",
    version,
    about = "Fixed-length sequence representations: integrated autoencoder and DTW baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic circle dataset and split it into train/val/test files.
    GenCircles(GenCirclesArgs),
    /// Train the integrated autoencoder; writes a checkpoint and an epoch log.
    Train(TrainArgs),
    /// Encode sequences into fixed-length representations with a trained model.
    Encode(EncodeArgs),
    /// Reconstruct sequences through the holistic decoder; exports a stop-feature trace.
    Reconstruct(ReconstructArgs),
    /// Build DTW distance representations against a vocabulary file.
    Dtw(DtwArgs),
    /// k-NN classification accuracy of representation files.
    Eval(EvalArgs),
    /// Semi-supervised simulation: fixed labeled subset, growing unlabeled pool.
    Semisup(SemisupArgs),
}

#[derive(Args)]
struct GenCirclesArgs {
    /// Samples generated per class.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Comma-separated loop counts, one class each.
    #[arg(long, default_value = "2,3")]
    loops: String,
    /// Inclusive sequence length range LO:HI.
    #[arg(long, default_value = "50:200")]
    len: String,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.01)]
    noise_std: f64,
    /// Draw the starting angle uniformly instead of starting at zero.
    #[arg(long)]
    random_phase: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Train:val:test fractions, summing to 1.
    #[arg(long, default_value = "0.6:0.15:0.25")]
    split: String,
    /// Directory for train.jsonl, val.jsonl, test.jsonl and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Training hyperparameters shared by `train` and `semisup`.
#[derive(Args)]
struct HyperArgs {
    /// Holistic-loss weight in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Hidden units (the representation length).
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Stop-feature mechanism: none|linear|tanh|exp.
    #[arg(long, default_value = "none")]
    stop: String,
    /// Steepness of the tanh/exp stop schedules.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Parameter storage precision: double|single.
    #[arg(long, default_value = "double")]
    precision: String,
    /// Element-wise gradient clip interval LO:HI.
    #[arg(long, default_value = "-5:5", allow_hyphen_values = true)]
    clip: String,
    /// Data-parallel gradient workers per batch.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training sequence file.
    #[arg(long)]
    train: PathBuf,
    /// Optional validation sequence file (adds a val_loss column to the log).
    #[arg(long)]
    val: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss log (default: <out>.history.tsv).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Optional SVG loss-curve plot.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sequence file to encode.
    #[arg(long)]
    input: PathBuf,
    /// Representation file (sequence format, one row per record).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Reconstructed sequence file (stop channel stripped).
    #[arg(long)]
    out: PathBuf,
    /// Per-step stop trace TSV (default: <out>.stop-trace.tsv).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Optional SVG of true vs reconstructed stop values (first sequence).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct DtwArgs {
    /// Sequences to represent.
    #[arg(long)]
    input: PathBuf,
    /// Vocabulary sequence file; one output dimension per entry.
    #[arg(long)]
    vocab: PathBuf,
    /// Local metric: euclidean|squared_euclidean.
    #[arg(long, default_value = "euclidean")]
    metric: String,
    /// Sakoe–Chiba band radius; omit for the full grid.
    #[arg(long)]
    band: Option<usize>,
    /// Divide each distance by the combined length of the pair.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled training representations (from `encode` or `dtw`).
    #[arg(long)]
    train_reps: PathBuf,
    /// Labeled test representations.
    #[arg(long)]
    test_reps: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Accuracy report TSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SemisupArgs {
    /// Full labeled training sequence file.
    #[arg(long)]
    train: PathBuf,
    /// Labeled test sequence file.
    #[arg(long)]
    test: PathBuf,
    /// Fraction of the training data whose labels the classifier may use.
    #[arg(long, default_value_t = 0.2)]
    labeled_fraction: f64,
    /// Strictly increasing unlabeled-data fractions, comma separated.
    #[arg(long, default_value = "0.2,0.4,0.6,0.8,1.0")]
    fractions: String,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Report TSV with one (fraction, accuracy) row per point.
    #[arg(long)]
    out: PathBuf,
}

/// Relative paths resolve against $ISA_DATA_DIR when it is set.
fn resolve(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(base) = std::env::var_os("ISA_DATA_DIR") {
            return PathBuf::from(base).join(path);
        }
    }
    path.to_path_buf()
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::GenCircles(args) => commands::gen_circles(args),
        Command::Train(args) => commands::train(args),
        Command::Encode(args) => commands::encode(args),
        Command::Reconstruct(args) => commands::reconstruct(args),
        Command::Dtw(args) => commands::dtw(args),
        Command::Eval(args) => commands::eval(args),
        Command::Semisup(args) => commands::semisup(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
