use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use bbm::corpus::{Representation, Weighting};

/// Bag-of-biterms topic models for short texts.
///
/// Every setting can also be given in a key=value file passed with --config
/// (keys are the long flag names without dashes); flags take precedence.
/// Each run writes `<command>.config` into its output directory, which
/// replays the run when passed back with --config.
#[derive(Debug, Parser)]
#[command(name = "bbm", version)]
pub struct Cli {
    /// key=value settings file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-document work: 1 runs sequentially, 0 uses every core [default: 0]
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// More log output (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize raw text into a vocabulary and a bag-format corpus
    Preprocess(PreprocessArgs),
    /// Train LDA-B or HDP-B and write a checkpoint plus per-step metrics
    Train(TrainArgs),
    /// Held-out log predictive probability and NPMI coherence of a checkpoint
    Eval(EvalArgs),
    /// Write weighted LIBSVM feature vectors (BoW or BoB)
    ExportFeatures(ExportArgs),
    /// List the most probable words of every topic
    TopWords(TopWordsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    LdaB,
    HdpB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Repr {
    Bob,
    Bow,
}

impl Repr {
    pub fn biterms(self) -> bool {
        self == Repr::Bob
    }
}

impl From<Repr> for Representation {
    fn from(r: Repr) -> Self {
        match r {
            Repr::Bob => Representation::Bob,
            Repr::Bow => Representation::Bow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Learner {
    Svi,
    Svb,
    Kps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Tf,
    Tfidf,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Tf => Weighting::Tf,
            WeightingArg::Tfidf => Weighting::TfIdf,
        }
    }
}

crate::enum_setting!(ModelKind, Repr, Learner, WeightingArg);

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw text, one document per line, optionally `label<TAB>text`
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Receives vocab.txt, corpus.bag and (when labels are present) labels.txt
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Stopword list, one word per line
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Minimum document frequency of a kept word [default: 3]
    #[arg(long)]
    pub min_df: Option<usize>,
    /// Minimum token count of a kept document [default: 3]
    #[arg(long)]
    pub min_doc_len: Option<usize>,
    /// Encode against this fixed vocabulary instead of building one (test data)
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Bag-format training corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Vocabulary file matching the corpus
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Receives model.ckpt and metrics.csv
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// [default: lda-b]
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Document representation; bow bypasses biterms entirely [default: bob]
    #[arg(long)]
    pub repr: Option<Repr>,
    /// [default: svi]
    #[arg(long)]
    pub learner: Option<Learner>,
    /// Number of topics (corpus-level truncation for hdp-b) [default: 100]
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Document-level truncation, hdp-b only [default: min(20, K)]
    #[arg(long = "T")]
    pub t: Option<usize>,
    /// Document-topic concentration [default: 1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Topic-word Dirichlet parameter [default: 0.01]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Corpus-level stick concentration, hdp-b only [default: 1]
    #[arg(long)]
    pub omega: Option<f64>,
    /// SVI delay [default: 1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// SVI forgetting rate in (0.5, 1] [default: 0.9]
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Minibatch size [default: 5000 for 50000+ documents, else min(500, documents)]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Corpus-size estimate used to scale SVI statistics [default: number of documents]
    #[arg(long = "D")]
    pub d: Option<usize>,
    /// Seed for initialization, shuffling and held-out splits [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Word-embedding file (`word v1 … vK`) giving the kps prior; required for kps
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Passes over the corpus [default: 1]
    #[arg(long)]
    pub passes: Option<usize>,
    /// Reshuffle documents every pass
    #[arg(long)]
    pub shuffle: bool,
    /// Bag-format held-out corpus; adds a per-step LPP column to metrics.csv
    #[arg(long)]
    pub heldout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// [default: lda-b]
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Representation used for inference on the observed tokens [default: bob]
    #[arg(long)]
    pub repr: Option<Repr>,
    /// Vocabulary the checkpoint was trained with
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Bag-format test corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Bag-format corpus for NPMI counts [default: the test corpus]
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Top words per topic for NPMI [default: 10]
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Seed of the held-out token split [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Receives report.csv
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Bag-format corpus to export
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// One label per corpus line (labels.txt from `preprocess`); unlabeled rows get 0
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// [default: bob]
    #[arg(long)]
    pub repr: Option<Repr>,
    /// [default: tfidf]
    #[arg(long)]
    pub weighting: Option<WeightingArg>,
    /// Minimum document frequency of a kept biterm [default: 1]
    #[arg(long)]
    pub biterm_threshold: Option<usize>,
    /// Bag-format corpus the biterm vocabulary is built from [default: --corpus]
    #[arg(long)]
    pub biterm_corpus: Option<PathBuf>,
    /// Receives features.svm
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopWordsArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// [default: lda-b]
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Words per topic [default: 10]
    #[arg(long)]
    pub n: Option<usize>,
    /// Receives top_words.txt
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
