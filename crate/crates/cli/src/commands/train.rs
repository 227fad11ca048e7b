//! train: optimize a model on a built dataset and write the run directory.

use std::path::Path;

use corpus::{CharacterLexicon, DialGenExample, DialSpkExample, Vocab};
use model::{prepare_dialgen, prepare_dialspk, ModelConfig};
use numerics::Scalar;
use serde::{Deserialize, Serialize};
use serde_json::json;
use train::{Task, TrainConfig, TrainOutcome};

use crate::args::TrainArgs;
use crate::configs::load_over;
use crate::data::{
    load_dataset_meta, load_lexicon, load_vocab, read_jsonl, task_name, DATASET_FILE,
};
use crate::error::CliError;
use crate::manifest::Run;
use crate::Result;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const BEST_FILE: &str = "best.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const COVERAGE_FILE: &str = "coverage.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// The config file's two sections; either may be partial or absent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

/// Final numbers a run leaves beside its logs.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    pub arch: String,
    pub train_examples: usize,
    pub valid_examples: usize,
    pub steps: usize,
    pub final_loss: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Mean of the per-window coverage means; absent for architectures
    /// that never select characters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_coverage: Option<f64>,
}

pub fn resolve_config(args: &TrainArgs, task: Task) -> Result<RunConfig> {
    let base = RunConfig { train: TrainConfig::for_task(task), model: ModelConfig::default() };
    let mut cfg = load_over(base, args.config.as_deref(), "train")?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(batch_size) = args.batch_size {
        cfg.train.batch_size = batch_size;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(window) = args.coverage_window {
        cfg.train.coverage_window = window;
    }
    if args.baseline {
        cfg.train.arch = model::ARCH_BASELINE.to_string();
    }
    cfg.train.validate()?;
    Ok(cfg)
}

/// The model's vocabulary size must agree with the dataset's; 0 in the
/// config means "take it from the vocabulary".
fn fit_vocab(model_cfg: &mut ModelConfig, vocab: &Vocab) -> Result<()> {
    if model_cfg.vocab_size == 0 {
        model_cfg.vocab_size = vocab.len();
    } else if model_cfg.vocab_size != vocab.len() {
        return Err(CliError::usage(format!(
            "model.vocab_size {} does not match the dataset vocabulary ({} tokens)",
            model_cfg.vocab_size,
            vocab.len()
        )));
    }
    model_cfg.validate()?;
    Ok(())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let task: Task = args.task.into();
    load_dataset_meta(&args.data, task)?;
    let vocab = load_vocab(&args.data)?;
    let lexicon = load_lexicon(&args.data)?;
    let mut cfg = resolve_config(args, task)?;
    fit_vocab(&mut cfg.model, &vocab)?;

    match numerics::precision_bits_from_env() {
        64 => train_task::<f64>(args, task, cfg, &vocab, &lexicon),
        _ => train_task::<f32>(args, task, cfg, &vocab, &lexicon),
    }
}

fn train_task<S: Scalar>(
    args: &TrainArgs,
    task: Task,
    cfg: RunConfig,
    vocab: &Vocab,
    lexicon: &CharacterLexicon,
) -> Result<()> {
    let train_path = args.data.join("train.jsonl");
    let valid_path = args.data.join("valid.jsonl");

    let outcome: TrainOutcome<S> = match task {
        Task::DialGen => {
            let train_set = dialgen_instances(&train_path, lexicon, vocab)?;
            let valid_set = dialgen_instances(&valid_path, lexicon, vocab)?;
            ensure_nonempty(&train_set, &args.data)?;
            train::train_dialgen(&cfg.train, cfg.model.clone(), &train_set, &valid_set)?
        }
        Task::DialSpk => {
            let train_set = dialspk_instances(&train_path, lexicon, vocab)?;
            let valid_set = dialspk_instances(&valid_path, lexicon, vocab)?;
            ensure_nonempty(&train_set, &args.data)?;
            train::train_dialspk(&cfg.train, cfg.model.clone(), &train_set, &valid_set)?
        }
    };

    let report = TrainReport {
        task,
        arch: cfg.train.arch.clone(),
        train_examples: count_lines(&train_path)?,
        valid_examples: count_lines(&valid_path)?,
        steps: outcome.metrics.len(),
        final_loss: outcome.metrics.last().map_or(f64::NAN, |m| m.loss),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        mean_coverage: mean_coverage(&outcome),
    };

    let final_ck = model::save_model(outcome.model.as_ref(), Some(outcome.adam))?;
    // The best-epoch snapshot shares the final checkpoint's meta; only the
    // parameter values differ.
    let mut best_ck = model::save_model(outcome.model.as_ref(), None)?;
    best_ck.params = outcome.best;

    let resolved = json!({"task": task, "train": cfg.train, "model": cfg.model});
    let mut run = Run::new("train", &args.out, cfg.train.seed, resolved.clone());
    run.input(&args.data.join(DATASET_FILE));
    run.input(&train_path);
    run.input(&valid_path);
    if let Some(path) = &args.config {
        run.input(path);
    }
    run.stage_json(CONFIG_FILE, &resolved)?;
    run.stage(CHECKPOINT_FILE, final_ck.to_bytes());
    run.stage(BEST_FILE, best_ck.to_bytes());
    run.stage_jsonl(METRICS_FILE, &outcome.metrics)?;
    if !outcome.coverage.is_empty() {
        run.stage_jsonl(COVERAGE_FILE, &outcome.coverage)?;
    }
    run.stage_json(REPORT_FILE, &report)?;
    run.commit()?;

    println!(
        "trained {} ({}) for {} epochs, {} steps; final loss {:.4}, best epoch {} (val loss {:.4})",
        task_name(task),
        report.arch,
        cfg.train.epochs,
        report.steps,
        report.final_loss,
        report.best_epoch,
        report.best_val_loss
    );
    Ok(())
}

fn dialgen_instances(
    path: &Path,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<Vec<model::DialGenInstance>> {
    let examples: Vec<DialGenExample> = read_jsonl(path)?;
    examples
        .iter()
        .map(|ex| {
            prepare_dialgen(ex, lexicon, vocab)
                .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))
        })
        .collect()
}

fn dialspk_instances(
    path: &Path,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<Vec<model::DialSpkInstance>> {
    let examples: Vec<DialSpkExample> = read_jsonl(path)?;
    examples
        .iter()
        .map(|ex| {
            prepare_dialspk(ex, lexicon, vocab)
                .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))
        })
        .collect()
}

fn ensure_nonempty<T>(train_set: &[T], data: &Path) -> Result<()> {
    if train_set.is_empty() {
        return Err(CliError::data(format!(
            "train split in {} has no examples",
            data.display()
        )));
    }
    Ok(())
}

fn count_lines(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

fn mean_coverage<S: Scalar>(outcome: &TrainOutcome<S>) -> Option<f64> {
    if outcome.coverage.is_empty() {
        return None;
    }
    let sum: f64 = outcome.coverage.iter().map(|r| r.mean_coverage).sum();
    Some(sum / outcome.coverage.len() as f64)
}
