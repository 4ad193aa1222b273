mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;

#[derive(Parser)]
#[command(name = "declab", version, about = "Decoding-algorithm laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an additively smoothed n-gram model and write it as a model file.
    Train(TrainArgs),
    /// Draw sequences from one decoder and print them as CSV.
    Sample(RunArgs),
    /// Run every decoder configuration over every prompt and write frontier.csv.
    Sweep(RunArgs),
    /// Run a brute-force verification and print a JSON report.
    Verify(VerifyArgs),
    /// Analyze 5-point ratings.
    Ratings(RatingsArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: std::path::PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub order: u64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value = "whitespace")]
    pub tokenizer: String,
    /// Output model file; standard output when omitted.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

/// Flags shared by `sample` and `sweep`. Anything left unset falls back to
/// `--config-file`, then to built-in defaults.
#[derive(Args, Default)]
pub struct RunArgs {
    /// JSON file with the same keys as these flags (underscores for dashes).
    #[arg(long)]
    pub config_file: Option<std::path::PathBuf>,
    /// Tree or n-gram model file.
    #[arg(long)]
    pub model: Option<std::path::PathBuf>,
    /// Train an n-gram model on this corpus instead of loading one.
    #[arg(long)]
    pub corpus: Option<std::path::PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub order: Option<u64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub tokenizer: Option<String>,
    /// Remote model server, `host:port`.
    #[arg(long)]
    pub remote: Option<String>,
    /// One prompt per line, tokenized like the corpus.
    #[arg(long)]
    pub prompts: Option<std::path::PathBuf>,
    /// A single prompt given inline (`sample` only).
    #[arg(long)]
    pub prompt: Option<String>,
    /// Decoder string, repeatable: random, greedy, temperature:T, topk:K,
    /// topp:P, selective:tau=T,alpha=A[,max=M].
    #[arg(long = "config")]
    pub configs: Vec<String>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (`sample`) or directory (`sweep`).
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Log-likelihood cutoff of the proxy quality (`sweep`).
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Plain samples used to estimate the partition function for selective
    /// configurations.
    #[arg(long)]
    pub partition_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Check {
    Prop1,
    Prop2,
    Rejection,
    Entropy,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub which: Check,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Global temperature (`prop2`, `rejection`).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Trials (`prop1`).
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Samples per decoder (`entropy`) or accepted samples (`rejection`).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Analysis {
    Pairwise,
    Kappa,
    Means,
}

#[derive(Args)]
pub struct RatingsArgs {
    /// CSV with header `task_id,item_id,rater_id,label`.
    #[arg(long)]
    pub input: std::path::PathBuf,
    #[arg(long, value_enum)]
    pub analysis: Analysis,
    #[arg(long, default_value_t = decoding_lab::ratings::DEFAULT_BOOTSTRAP_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Sample(a) => commands::sample(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Verify(a) => commands::verify(&a),
        Command::Ratings(a) => commands::ratings(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
