//! `pagectx` command-line runner: synthetic corpora, encoder training, sequential
//! inference, CRF and BiLSTM baselines, scoring and paired comparison.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pagectx::corpus::SplitName;
use pagectx::encoder::EncoderVariant;

#[derive(Parser)]
#[command(name = "pagectx", version, about = "Context-aware page classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Markov corpus into a directory.
    Synth(SynthArgs),
    /// Train a page encoder (recurrent by default).
    Train(TrainArgs),
    /// Run a trained encoder over one split and write prediction traces.
    Infer(InferArgs),
    /// Fit a CRF on a frozen context-oblivious encoder's saved predictions.
    Crf(CrfArgs),
    /// Train a BiLSTM over TF-IDF/SVD page vectors.
    Bilstm(BilstmArgs),
    /// Score a trace file against the gold labels.
    Eval(EvalArgs),
    /// Paired comparison of two trace files (F1 deltas and McNemar-Bowker).
    Compare(CompareArgs),
    /// Class counts, run lengths and self-transition rates of a corpus.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Synthetic generator config (TOML or JSON); overrides the shape flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.85)]
    pub self_prob: f64,
    #[arg(long, default_value_t = 0.8)]
    pub ambiguity: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Options shared by commands that create a run directory.
#[derive(Args)]
pub struct RunArgs {
    /// Corpus manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Run config (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory; the run goes to `<out>/<run-id>/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the command name plus a prefix of the config hash.
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Train without the previous-page token.
    #[arg(long)]
    pub oblivious: bool,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<EncoderVariant>,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    /// Trace output (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write saved predictions keyed by the checkpoint's hash.
    #[arg(long)]
    pub saved: Option<PathBuf>,
}

#[derive(Args)]
pub struct CrfArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Frozen context-oblivious encoder checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split to fit on; overrides `crf_fit_split` in the config.
    #[arg(long)]
    pub fit_split: Option<SplitName>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Args)]
pub struct BilstmArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, default_value = "model")]
    pub name: String,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "A")]
    pub name_a: String,
    #[arg(long, default_value = "B")]
    pub name_b: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<EncoderVariant, String> {
    match s {
        "linear" => Ok(EncoderVariant::Linear),
        "tiny-transformer" | "transformer" => Ok(EncoderVariant::TinyTransformer),
        _ => Err(format!("unknown variant {s:?} (linear, tiny-transformer)")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => run::synth(a),
        Command::Train(a) => run::train(a),
        Command::Infer(a) => run::infer(a),
        Command::Crf(a) => run::crf(a),
        Command::Bilstm(a) => run::bilstm(a),
        Command::Eval(a) => run::eval(a),
        Command::Compare(a) => run::compare(a),
        Command::Stats(a) => run::stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<config::UsageError>().is_some()
                || matches!(e.downcast_ref::<pagectx::Error>(), Some(pagectx::Error::InvalidConfig(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
