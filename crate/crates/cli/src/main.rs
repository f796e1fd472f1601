//! `teachbot`: preprocessing, training, evaluation, ablations, learning
//! curves, rule checking and an interactive chat REPL.

mod chat;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "teachbot", version, about = "Dialog response ranking with natural-language rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Delexicalize the raw corpus and write splits, catalog and schema.
    Preprocess(PreprocessArgs),
    /// Train one model and write its checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Train all four rule variants over several seeds.
    Ablate(HarnessArgs),
    /// Test recall@1 against training-set size.
    Curve(CurveArgs),
    /// Validate a rule file against a catalog.
    RulesCheck(RulesCheckArgs),
    /// Interactive session with a trained model.
    Chat(ChatArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Directory with kvret_{train,dev,test}_public.json.
    #[arg(long, env = "TEACHBOT_DATA")]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only this domain (weather, navigate, schedule).
    #[arg(long)]
    domain: Option<String>,
    /// Rank the whole catalog when it has fewer than 10 templates.
    #[arg(long)]
    allow_small_catalog: bool,
}

/// Options shared by every command that trains.
#[derive(Args, Debug, Clone)]
struct TrainOpts {
    /// Preprocessed data directory.
    #[arg(long, env = "TEACHBOT_DATA")]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON training configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// SC (scratch) or WE (pretrained word vectors).
    #[arg(long)]
    encoder: Option<teachbot::model::EncoderKind>,
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    /// Optimizer update per `dialog` or per `turn`.
    #[arg(long)]
    update: Option<teachbot::train::UpdateMode>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    resample_per_epoch: bool,
    /// Rank the full catalog during evaluation.
    #[arg(long)]
    full_catalog: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    opts: TrainOpts,
    #[arg(long)]
    variant: Option<teachbot::train::Variant>,
    #[arg(long)]
    train_size: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = "TEACHBOT_DATA")]
    data_dir: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    variant: Option<teachbot::train::Variant>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    full_catalog: bool,
    /// Also write eval.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HarnessArgs {
    #[command(flatten)]
    opts: TrainOpts,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    harness: HarnessArgs,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_values = ["NLR", "NLR-SU"])]
    variants: Vec<teachbot::train::Variant>,
}

#[derive(Args, Debug)]
struct RulesCheckArgs {
    #[arg(long)]
    rules: PathBuf,
    /// catalog.json, or a preprocessed data directory containing it.
    #[arg(long)]
    catalog: PathBuf,
    /// Score with this checkpoint's encoder instead of the hash encoder.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ChatArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Preprocessed data directory (catalog.json and schema.json).
    #[arg(long, env = "TEACHBOT_DATA")]
    data_dir: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    variant: Option<teachbot::train::Variant>,
    /// Show the top-5 distribution, firing rules and α mass.
    #[arg(long)]
    debug: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<teachbot::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Curve(a) => commands::curve(a),
        Command::RulesCheck(a) => commands::rules_check(a),
        Command::Chat(a) => chat::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
