//! `avitm`: corpus preparation, training, sampling and evaluation for
//! autoencoded topic models.
//!
//! Every artifact-producing command writes into `--out` with fixed names
//! (`model.bin`, `manifest.txt`, `report.txt`, `trace.log`, ...).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use avitm::avitm::DecoderKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "avitm", version, about = "Neural and sampled topic models over bag-of-words corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a corpus directory from plain text or UCI bag-of-words files.
    Ingest(IngestArgs),
    /// Generate a synthetic LDA corpus with known topics.
    Synth(SynthArgs),
    /// Train an autoencoded topic model.
    Train(TrainArgs),
    /// Fit LDA by collapsed Gibbs sampling.
    Gibbs(GibbsArgs),
    /// Score a trained model (or a topic matrix) against a corpus.
    Eval(EvalArgs),
    /// Print the top words of each topic.
    Topics(TopicsArgs),
    /// Train under a healthy and a collapse-prone optimizer, same seed.
    CollapseDemo(CollapseArgs),
    /// Train every optimizer/prior preset and tabulate the results.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["text_dir", "docword"])))]
pub struct IngestArgs {
    /// Directory of plain-text documents, one per file (walked recursively).
    #[arg(long)]
    pub text_dir: Option<PathBuf>,
    /// UCI docword file; needs --vocab.
    #[arg(long, requires = "vocab")]
    pub docword: Option<PathBuf>,
    /// UCI vocabulary file, one token per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Stopword list, one per line; the built-in English list otherwise.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    pub min_doc_freq: usize,
    #[arg(long, default_value_t = 2)]
    pub min_token_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeArg {
    Bars,
    Dirichlet,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = ShapeArg::Bars)]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 25)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 500)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub doc_length: usize,
    /// Document-topic Dirichlet concentration.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Topic-word concentration for --shape dirichlet.
    #[arg(long, default_value_t = 0.1)]
    pub concentration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorArg {
    Dirichlet,
    Gaussian,
}

/// Model and optimizer settings shared by the training commands. Unset
/// values come from the preset.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "prodlda")]
    pub decoder: DecoderKind,
    /// One of high-lr-bn, low-lr-no-bn, gaussian-high, gaussian-low.
    #[arg(long, default_value = "high-lr-bn")]
    pub preset: String,
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    /// Symmetric Dirichlet concentration for the Dirichlet prior.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub topics: usize,
    /// Encoder trunk widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Batch normalization on or off.
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    pub batch_norm: Option<bool>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub kl_warmup: u64,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory (docword.txt and vocab.txt).
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fraction of documents held out for perplexity; 0 trains on all.
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Held-out evaluation and checkpoint period in epochs; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GibbsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub topics: usize,
    #[arg(long, default_value_t = avitm::gibbs::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = avitm::gibbs::DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = 150)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub thinning: usize,
    /// Held-out corpus for a document-completion perplexity diagnostic.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingArg {
    /// Negligible fixed floor (1e-12).
    Fixed,
    /// 1 / (D + 1) for a reference corpus of D documents.
    InverseDocs,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("topics_from").required(true).args(["model", "topic_matrix"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// K×V topic matrix in text form (coherence and topics only).
    #[arg(long, conflicts_with_all = ["perplexity", "sparsity", "compare_inference"])]
    pub topic_matrix: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub perplexity: bool,
    #[arg(long)]
    pub coherence: bool,
    #[arg(long)]
    pub sparsity: bool,
    #[arg(long)]
    pub compare_inference: bool,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Noise draws per document for sampled quantities.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = SmoothingArg::Fixed)]
    pub smoothing: SmoothingArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("topics_from").required(true).args(["model", "topic_matrix"])))]
pub struct TopicsArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub topic_matrix: Option<PathBuf>,
    /// Corpus directory supplying the vocabulary.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
}

#[derive(Args, Debug)]
pub struct CollapseArgs {
    /// Corpus directory; the bars benchmark when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Restrict to one decoder; both otherwise.
    #[arg(long)]
    pub decoder: Option<DecoderKind>,
    #[arg(long, default_value_t = 50)]
    pub topics: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
