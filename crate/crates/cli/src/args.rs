//! Flag definitions. All randomness in a command flows from its one seed.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use train::Task;

#[derive(Debug, Parser)]
#[command(
    name = "storydial",
    version,
    about = "Story-dialogue modeling pipeline: synthetic corpora, infilling and speaker tasks, training, evaluation.",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.\n\
                  Set STORYDIAL_PRECISION=64 to run training and evaluation in 64-bit."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic story corpus with ground-truth annotation.
    GenCorpus(GenCorpusArgs),
    /// Re-derive turns, mentions, and speakers from story tokens alone.
    Annotate(AnnotateArgs),
    /// Build a task dataset with train/valid/test splits from a corpus.
    Build(BuildArgs),
    /// Train a model on a built dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
}

/// Task flag shared by build, train, and eval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    DialGen,
    DialSpk,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::DialGen => Task::DialGen,
            TaskArg::DialSpk => Task::DialSpk,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    /// Generation config JSON; omitted fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (stories, lexicon, vocabulary, stats, manifest).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's story count.
    #[arg(long)]
    pub stories: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Corpus directory from gen-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory (annotated stories, attribution, manifest).
    #[arg(long)]
    pub out: PathBuf,
    /// Threads for per-story work; output order is input order regardless.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Corpus directory from gen-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Story fraction for the training split; the three ratios must sum to 1.
    #[arg(long, default_value_t = 0.9)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 0.05)]
    pub val_ratio: f64,
    #[arg(long, default_value_t = 0.05)]
    pub test_ratio: f64,
    /// Fraction of dialogue turns masked per DialGen example.
    #[arg(long, default_value_t = 0.3)]
    pub mask_ratio: f64,
    /// Fraction of attributable turns specified per DialSpk example.
    #[arg(long, default_value_t = 0.4)]
    pub probe_ratio: f64,
    /// Label DialSpk turns with the attribution heuristic even when
    /// generator ground truth is available.
    #[arg(long)]
    pub heuristic_speakers: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Dataset directory from build.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory (config copy, checkpoints, logs, report, manifest).
    #[arg(long)]
    pub out: PathBuf,
    /// Train/model config JSON with optional "train" and "model" sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train the ablated baseline instead of the character model.
    #[arg(long)]
    pub baseline: bool,
    /// Overrides the config's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides the config's batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Overrides the config's learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Overrides the steps-per-coverage-report window.
    #[arg(long)]
    pub coverage_window: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl SplitArg {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitArg::Train => "train.jsonl",
            SplitArg::Valid => "valid.jsonl",
            SplitArg::Test => "test.jsonl",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Checkpoint file from train.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory from build.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (report, per-example outputs, manifest).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Seeds sampling decodes and the coherence probe.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Threads for per-example work; output order is input order regardless.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Decoding length cap for DialGen generation.
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Sample from the top-k tokens instead of decoding greedily.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Score gold outputs as if generated (BLEU self-match sanity knob).
    #[arg(long)]
    pub echo_gold: bool,
    /// Train a coherence probe on the train split and score DialGen infills.
    #[arg(long)]
    pub coherence: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus directory from gen-corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Optional output directory for stats.json and a manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn task_values_use_kebab_case() {
        use clap::Parser;
        let cli = Cli::parse_from(["storydial", "build", "--task", "dial-gen", "--corpus", "c", "--out", "o"]);
        match cli.command {
            Command::Build(args) => assert_eq!(args.task, TaskArg::DialGen),
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        use clap::Parser;
        assert!(Cli::try_parse_from(["storydial", "stats", "--corpus", "c", "--frobnicate"]).is_err());
    }
}
