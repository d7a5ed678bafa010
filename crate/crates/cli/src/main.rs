//! `lst`: data prep, teacher and student training, decoding, evaluation,
//! sweeps and self-checks for soft-label seq2seq speech recognition.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lst_core::manifest::RunManifest;
use lst_core::training::LabelMode;
use lst_core::Error;

#[derive(Parser, Debug)]
#[command(name = "lst", version, about = "Seq2seq speech recognition with soft labels from a teacher LM")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every random choice; falls back to $LST_SEED, then 0.
    #[arg(long, global = true, env = "LST_SEED")]
    pub seed: Option<u64>,

    /// Re-run the command recorded in a manifest, with its arguments and seed.
    #[arg(long, value_name = "MANIFEST")]
    pub replay: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a data directory: features, vocabulary, and prepared LM text.
    /// Without --train, generates the synthetic task.
    Prep(PrepArgs),
    /// Train the teacher LSTM language model on prepared text.
    TrainLm(TrainLmArgs),
    /// Train the seq2seq student under one label mode.
    TrainS2s(TrainS2sArgs),
    /// Beam-search a set and write hypotheses.
    Decode(DecodeArgs),
    /// Decode a set and score it.
    Eval(EvalArgs),
    /// Run the property checks and print a TAP report.
    Verify(VerifyArgs),
    /// Train and evaluate a grid of label modes, lambdas, temperatures and fusion weights.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    /// Output data directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Training transcripts (`utt_id<TAB>text`); omit for the synthetic task.
    #[arg(long, requires = "audio")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub dev: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// Directory holding `{utt_id}.wav` or raw `{utt_id}.lstf` filterbanks.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// External text pool to select teacher text from.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Sentences kept by cross-entropy-difference selection.
    #[arg(long, default_value_t = 2000)]
    pub top_n: usize,
    /// Longest selected sentence, in characters.
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    /// Copies of the training transcripts mixed into the teacher text.
    #[arg(long, default_value_t = 1)]
    pub dup: usize,
    /// Characters seen fewer times map to <unk> (real data only).
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Synthetic-task override, e.g. `corpus.n_train=800`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training text; defaults to DATA/lm_text.txt.
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to OUT.curves.csv.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 48)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// In-domain text for perplexity; defaults to DATA/held_out.txt when present.
    #[arg(long)]
    pub held_out: Option<PathBuf>,
    /// Also write the soft-label cache for the training set here.
    #[arg(long)]
    pub soft_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub temperature: f64,
    /// Keep the M most likely teacher entries in the cache.
    #[arg(long)]
    pub top_m: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub enc_blocks: usize,
    #[arg(long, default_value_t = 2)]
    pub dec_blocks: usize,
    #[arg(long, default_value_t = 64)]
    pub ff_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Normalize after each residual sum instead of before each sublayer.
    #[arg(long)]
    pub post_norm: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainingArgs {
    /// `key = value` training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub label_mode: Option<LabelMode>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Any training key, e.g. `warmup=400`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Teacher checkpoint for lst mode.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Precomputed soft labels for lst mode (instead of --teacher).
    #[arg(long, conflicts_with = "teacher")]
    pub soft_labels: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct TrainS2sArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint of the epoch with the lowest dev cross-entropy.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV; defaults to OUT.curves.csv.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Which set of the data directory to decode.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub model: PathBuf,
    /// Language model for shallow fusion.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 60)]
    pub max_len: usize,
    /// One or more comma-separated LM weights; one output per weight.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub fusion_weight: Vec<f64>,
    /// Rank finished hypotheses by per-token score.
    #[arg(long)]
    pub length_norm: bool,
    /// Output prefix: PREFIX.decode.tsv (PREFIX.w{weight}.decode.tsv for several weights).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// Exit with status 1 when any CER exceeds this percentage.
    #[arg(long)]
    pub max_cer: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negate the LST loss term.
    LstSign,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Run one group: equivalence, gradients, identities, temperature, beam, cer, kn, schedule.
    #[arg(long)]
    pub only: Option<String>,
    /// Deliberately break the code under test to show the checks catch it.
    #[arg(long, value_enum)]
    pub inject_fault: Option<Fault>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, curves, reports and summary.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "hard,lst,uniform,unigram,unigram-smoothed")]
    pub modes: Vec<LabelMode>,
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub temperatures: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1")]
    pub fusion_weights: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 60)]
    pub max_len: usize,
    #[command(flatten)]
    pub training: TrainingArgs,
}

fn parse_mode(s: &str) -> Result<LabelMode, String> {
    s.parse::<LabelMode>().map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::TrainingFailure { .. } | Error::EvaluationFailure(_) => 1,
    }
}

/// Arguments as recorded in a manifest: the effective seed is always explicit.
fn recorded_args(raw: &[String], seed: u64) -> Vec<String> {
    let mut out = Vec::with_capacity(raw.len() + 2);
    let mut i = 0;
    while i < raw.len() {
        let a = &raw[i];
        if a == "--seed" {
            i += 2;
            continue;
        }
        if !a.starts_with("--seed=") {
            out.push(a.clone());
        }
        i += 1;
    }
    out.push("--seed".into());
    out.push(seed.to_string());
    out
}

fn run(raw: Vec<String>) -> Result<u8, Error> {
    let cli = match Cli::try_parse_from(std::iter::once("lst".to_string()).chain(raw.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return Ok(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(path) = &cli.replay {
        if cli.command.is_some() {
            return Err(Error::InvalidArgument("--replay takes no subcommand".into()));
        }
        let m = RunManifest::read(path)?;
        if m.args.is_empty() {
            return Err(Error::InvalidArgument(format!("{} records no command arguments", path.display())));
        }
        eprintln!("replaying {} (seed {})", m.command, m.seed);
        return run(m.args);
    }
    let seed = cli.seed.unwrap_or(0);
    let args = recorded_args(&raw, seed);
    let Some(command) = cli.command else {
        return Err(Error::InvalidArgument("no subcommand given".into()));
    };
    commands::dispatch(command, seed, args)
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
