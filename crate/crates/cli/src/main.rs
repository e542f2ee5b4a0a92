use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pkd_core::data::{Schema, TaskKind};
use pkd_core::distill::DistillStrategy;

mod commands;
mod settings;

/// Teacher training, layer-wise knowledge distillation and benchmarking for
/// small BERT-style encoders.
#[derive(Parser, Debug)]
#[command(name = "pkd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic task and write train/dev/test TSV files plus vocab.txt.
    GenData(GenDataArgs),
    /// Train a teacher encoder with cross-entropy.
    TrainTeacher(TrainTeacherArgs),
    /// Fine-tune a student on hard labels only.
    Finetune(FinetuneArgs),
    /// Distill a teacher into a shallower student.
    Distill(DistillArgs),
    /// Report accuracy of a checkpoint on a labeled TSV file.
    Eval(EvalArgs),
    /// Grid search over temperature, alpha, beta and learning rate.
    Grid(GridArgs),
    /// Parameter counts and inference timing across depths.
    Bench(BenchArgs),
    /// Merge run records into one long-format learning-curve CSV.
    Curves(CurvesArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// parity, majority or pattern-pair
    #[arg(long)]
    task: TaskKind,
    /// Number of content tokens
    #[arg(long, default_value_t = 8)]
    vocab_size: usize,
    /// Tokens per segment
    #[arg(long, default_value_t = 16)]
    seq_len: usize,
    /// Total examples across train, dev and test (split 80/10/10)
    #[arg(long, default_value_t = 25_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Training TSV (required)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dev TSV used for checkpoint selection (required)
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Optional test TSV, scored with the selected checkpoint
    #[arg(long)]
    test: Option<PathBuf>,
    /// Column layout of the TSV files: single or pair
    #[arg(long, default_value = "single")]
    schema: Schema,
}

#[derive(Args, Debug)]
struct OptimArgs {
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for initialization, shuffling and dropout
    #[arg(long)]
    seed: Option<u64>,
    /// Clip gradients to this global norm
    #[arg(long)]
    grad_clip: Option<f64>,
}

#[derive(Args, Debug)]
struct DistillFlags {
    #[arg(long)]
    strategy: Option<DistillStrategy>,
    /// Weight of the soft-label term
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the intermediate-layer term (defaults to 0 for strategy none)
    #[arg(long)]
    beta: Option<f64>,
    /// Softmax temperature
    #[arg(long)]
    temp: Option<f64>,
    /// Soften the student logits too and scale the soft-label term by T^2
    #[arg(long)]
    symmetric_temp: bool,
}

#[derive(Args, Debug)]
struct TrainTeacherArgs {
    /// JSON file with optional "model" and "optimizer" sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Vocabulary file; built from the training data when absent
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Encoder depth
    #[arg(long)]
    layers: Option<usize>,
    /// Maximum encoded length; defaults to the longest training example
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output directory for the checkpoint, vocab.txt, metrics.csv and run.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    /// JSON file with optional "model" and "optimizer" sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Teacher checkpoint whose bottom layers initialize the student
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long)]
    student_layers: usize,
    #[command(flatten)]
    data: DataArgs,
    /// Vocabulary file, used only without --teacher
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Maximum encoded length, used only without --teacher
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistillArgs {
    /// JSON file with optional "optimizer" and "distill" sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Teacher checkpoint directory (required)
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Expected teacher depth, checked before anything is loaded
    #[arg(long)]
    teacher_layers: Option<usize>,
    #[arg(long)]
    student_layers: usize,
    #[command(flatten)]
    distill: DistillFlags,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Run the teacher on every batch instead of caching its outputs
    #[arg(long)]
    no_cache: bool,
    /// Output directory (required)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint directory
    #[arg(long)]
    model: PathBuf,
    /// Labeled TSV file
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "single")]
    schema: Schema,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// JSON file with optional "optimizer" and "distill" sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Teacher checkpoint directory
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student_layers: usize,
    #[arg(long, default_value = "none")]
    strategy: DistillStrategy,
    /// Temperatures to try
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 20.0])]
    temp: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.7])]
    alpha: Vec<f64>,
    /// Defaults to 0 for strategy none and to 10,100,500,1000 otherwise
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [5e-5, 2e-5, 1e-5])]
    lr: Vec<f64>,
    #[arg(long)]
    symmetric_temp: bool,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_cache: bool,
    /// Output directory for grid.csv and per-run records
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// JSON file with an optional "model" section giving the shared width
    #[arg(long)]
    config: Option<PathBuf>,
    /// Depths to compare
    #[arg(long, value_delimiter = ',', default_values_t = [12, 6, 3])]
    depths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    seq_len: usize,
    /// Timed passes per depth (median reported)
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for bench.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CurvesArgs {
    /// Run directories (each holding run.json); the directory name is the run id
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output directory for curves.csv
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::TrainTeacher(a) => commands::train_teacher(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Distill(a) => commands::distill(a),
        Command::Eval(a) => commands::eval(a),
        Command::Grid(a) => commands::grid(a),
        Command::Bench(a) => commands::bench(a),
        Command::Curves(a) => commands::curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
