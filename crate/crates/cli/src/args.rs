use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "forumtag", version, about = "Learning-resource mention tagging for course forums")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file of defaults; keys are flag names, and for train, gradcheck and
    /// synth-gen also model or generator settings. Flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split raw thread posts into sentences and write thread JSONL.
    CorpusBuild(CorpusBuild),
    /// Inter-group agreement from two stand-off annotation files.
    Agreement(Agreement),
    /// Merge two annotation groups into a tagged column corpus.
    DatasetBuild(DatasetBuild),
    /// Train a tagger.
    Train(Train),
    /// Score a trained tagger on a tagged corpus.
    Evaluate(Evaluate),
    /// Tag threads with a trained model.
    Tag(Tag),
    /// Categorize predicted mentions against gold mentions.
    AnalyzeErrors(AnalyzeErrors),
    /// Finite-difference check of a variant's loss gradient.
    Gradcheck(Gradcheck),
    /// Generate a synthetic annotated corpus.
    SynthGen(SynthGen),
}

#[derive(Args, Debug)]
pub struct CorpusBuild {
    /// JSONL with `thread_id`, optional `course_id`, and `posts` as raw strings (post 0 is the title).
    #[arg(long)]
    pub input: PathBuf,
    /// Thread JSONL with one sentence string per entry.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an untagged column corpus.
    #[arg(long)]
    pub columns: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Agreement {
    #[arg(long, requires = "g2")]
    pub g1: Option<PathBuf>,
    #[arg(long, requires = "g1")]
    pub g2: Option<PathBuf>,
    /// JSON object mapping each type to `[group1, group2, intersection]` totals.
    #[arg(long, conflicts_with = "g1")]
    pub counts: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Form {
    /// Mentions both groups agree on.
    FormM,
    /// Every mention either group annotated.
    FormL,
}

#[derive(Args, Debug)]
pub struct DatasetBuild {
    #[arg(value_enum)]
    pub form: Form,
    #[arg(long)]
    pub threads: PathBuf,
    #[arg(long)]
    pub g1: PathBuf,
    #[arg(long)]
    pub g2: PathBuf,
    /// Tagged column corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the agreement table as JSON.
    #[arg(long)]
    pub agreement_out: Option<PathBuf>,
}

/// Tagger settings exposed as flags.
#[derive(Args, Debug, Default)]
pub struct TaggerFlags {
    /// crf, blstm, blstm-crf, blstm-crf-ce or blstm-crf-ce-ca.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct Train {
    #[command(flatten)]
    pub tagger: TaggerFlags,
    /// Tagged column corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pretrained word vectors in whitespace-separated text format.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Per-epoch JSONL log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Run k-fold cross-validation.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Write the resolved configuration.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Evaluate {
    #[arg(long)]
    pub model: PathBuf,
    /// Gold tagged column corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vectors defining the out-of-vocabulary split.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Tag {
    #[arg(long)]
    pub model: PathBuf,
    /// Thread JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Tagged column corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL of attention weights per sentence (context-attention models).
    #[arg(long)]
    pub attention: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeErrors {
    /// Gold tagged column corpus.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted tagged column corpus over the same sentences.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Examples listed per error category.
    #[arg(long, default_value_t = 3)]
    pub examples: usize,
}

#[derive(Args, Debug)]
pub struct Gradcheck {
    #[command(flatten)]
    pub tagger: TaggerFlags,
    /// Coordinates sampled per parameter tensor; all when omitted.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthGen {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub train_sentences: Option<usize>,
    #[arg(long)]
    pub test_sentences: Option<usize>,
    #[arg(long)]
    pub oov_rate: Option<f64>,
    #[arg(long)]
    pub anaphora_rate: Option<f64>,
    #[arg(long)]
    pub distractor_ratio: Option<f64>,
    /// Sets the drop, span and retype rates of the second group; spurious additions get half.
    #[arg(long)]
    pub perturbation: Option<f64>,
    #[arg(long)]
    pub context_window: Option<usize>,
    #[arg(long)]
    pub vector_dim: Option<usize>,
}
