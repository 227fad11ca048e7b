//! eval: score a checkpoint on a dataset split and emit a metric report.
//!
//! DialGen writes every generated turn beside its gold turn for inspection;
//! DialSpk writes per-story predictions. The report schema is the `eval`
//! crate's MetricReport, serialized as JSON next to the raw outputs.

use std::path::Path;

use corpus::vocab::{MASK, SEP};
use corpus::{CharacterLexicon, DialGenExample, DialSpkExample, Story, Vocab};
use eval::{bleu_corpus, dac_sac, distinct_n, CoherenceConfig, CoherenceModel, MetricReport, StoryOutcome};
use model::{predict_speakers, Decoding, GenSettings, StoryModel};
use numerics::{sub_seed, sub_seed_indexed, Checkpoint, Scalar};
use serde::Serialize;
use serde_json::json;
use train::Task;

use crate::args::EvalArgs;
use crate::data::{
    copy_bytes, load_dataset_meta, load_lexicon, load_vocab, ordered_map, read_jsonl,
    worker_pool, DATASET_FILE,
};
use crate::error::CliError;
use crate::manifest::Run;
use crate::Result;

pub const REPORT_FILE: &str = "report.json";
pub const GENERATED_FILE: &str = "generated.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// One generated turn beside its gold counterpart.
#[derive(Debug, Serialize)]
struct GeneratedRow {
    story_id: String,
    turn: usize,
    generated: Vec<u32>,
    generated_text: String,
    gold: Vec<u32>,
    gold_text: String,
}

/// One story's speaker picks beside the gold labels.
#[derive(Debug, Serialize)]
struct PredictionRow {
    story_id: String,
    candidates: Vec<String>,
    predicted: Vec<usize>,
    gold: Vec<usize>,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let task: Task = args.task.into();
    load_dataset_meta(&args.data, task)?;
    let vocab = load_vocab(&args.data)?;
    let lexicon = load_lexicon(&args.data)?;

    match numerics::precision_bits_from_env() {
        64 => eval_task::<f64>(args, task, &vocab, &lexicon),
        _ => eval_task::<f32>(args, task, &vocab, &lexicon),
    }
}

fn load_checkpoint<S: Scalar>(path: &Path, vocab: &Vocab) -> Result<Box<dyn StoryModel<S>>> {
    let bytes = copy_bytes(path)?;
    let ck = Checkpoint::<S>::from_bytes(&bytes).map_err(|e| {
        CliError::data(format!(
            "checkpoint {}: {e} (runs and evaluations must agree on STORYDIAL_PRECISION)",
            path.display()
        ))
    })?;
    let (model, _adam) = model::load_model(ck)?;
    if model.config().vocab_size != vocab.len() {
        return Err(CliError::data(format!(
            "checkpoint {} was trained over {} vocabulary tokens, the dataset has {}",
            path.display(),
            model.config().vocab_size,
            vocab.len()
        )));
    }
    Ok(model)
}

fn eval_task<S: Scalar>(
    args: &EvalArgs,
    task: Task,
    vocab: &Vocab,
    lexicon: &CharacterLexicon,
) -> Result<()> {
    let model = load_checkpoint::<S>(&args.checkpoint, vocab)?;
    let split_path = args.data.join(args.split.file_name());

    let (report, rows_file, rows_bytes) = match task {
        Task::DialGen => {
            let (report, bytes) =
                eval_dialgen(args, model.as_ref(), &split_path, vocab, lexicon)?;
            (report, GENERATED_FILE, bytes)
        }
        Task::DialSpk => {
            let (report, bytes) =
                eval_dialspk(args, model.as_ref(), &split_path, vocab, lexicon)?;
            (report, PREDICTIONS_FILE, bytes)
        }
    };

    let config = json!({
        "task": task,
        "split": args.split.file_name(),
        "seed": args.seed,
        "workers": args.workers,
        "max_tokens": args.max_tokens,
        "top_k": args.top_k,
        "echo_gold": args.echo_gold,
        "coherence": args.coherence,
    });
    let mut run = Run::new("eval", &args.out, args.seed, config);
    run.input(&args.checkpoint);
    run.input(&args.data.join(DATASET_FILE));
    run.input(&split_path);
    run.stage_json(REPORT_FILE, &report)?;
    run.stage(rows_file, rows_bytes);
    run.commit()?;

    print!("{report}");
    Ok(())
}

/// Splits a gold output on the separator token into per-placeholder turns.
fn split_gold(gold: &[u32]) -> Vec<Vec<u32>> {
    gold.split(|&t| t == SEP).map(<[u32]>::to_vec).collect()
}

/// Replaces the k-th placeholder with the k-th turn, yielding a full story
/// token stream (the gold turns reproduce the original story exactly).
fn fill_placeholders(input: &[u32], turns: &[Vec<u32>]) -> Vec<u32> {
    let mut out = Vec::with_capacity(input.len() + turns.iter().map(Vec::len).sum::<usize>());
    let mut k = 0;
    for &tok in input {
        if tok == MASK && k < turns.len() {
            out.extend_from_slice(&turns[k]);
            k += 1;
        } else {
            out.push(tok);
        }
    }
    out
}

fn eval_dialgen<S: Scalar>(
    args: &EvalArgs,
    model: &dyn StoryModel<S>,
    split_path: &Path,
    vocab: &Vocab,
    lexicon: &CharacterLexicon,
) -> Result<(MetricReport, Vec<u8>)> {
    let examples: Vec<DialGenExample> = read_jsonl(split_path)?;
    if examples.is_empty() {
        return Err(CliError::data(format!("{} has no examples", split_path.display())));
    }

    let pool = worker_pool(args.workers)?;
    let turns_per_example: Vec<Vec<Vec<u32>>> = ordered_map(&pool, &examples, |i, ex| {
        let gold_turns = split_gold(&ex.gold_output);
        if args.echo_gold {
            return Ok(gold_turns);
        }
        let inst = prepare(ex, lexicon, vocab)?;
        let settings = GenSettings {
            max_tokens: args.max_tokens.unwrap_or_else(|| GenSettings::default().max_tokens),
            decoding: match args.top_k {
                None => Decoding::Greedy,
                Some(k) => {
                    Decoding::TopK { k, seed: sub_seed_indexed(args.seed, "decode", i as u64) }
                }
            },
        };
        let output = model
            .generate(&inst, &settings)
            .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))?;
        Ok(output.turns)
    })?;

    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (ex, turns) in examples.iter().zip(&turns_per_example) {
        for (t, (generated, gold)) in turns.iter().zip(split_gold(&ex.gold_output)).enumerate() {
            rows.push(GeneratedRow {
                story_id: ex.story_id.clone(),
                turn: t,
                generated_text: vocab.decode_text(generated),
                gold_text: vocab.decode_text(&gold),
                generated: generated.clone(),
                gold,
            });
            pairs.push((generated.clone(), rows.last().expect("just pushed").gold.clone()));
        }
    }
    let all_turns: Vec<Vec<u32>> = pairs.iter().map(|(c, _)| c.clone()).collect();

    let mut report = MetricReport {
        bleu1: Some(bleu_corpus(&pairs, 1)),
        bleu2: Some(bleu_corpus(&pairs, 2)),
        turns_evaluated: Some(pairs.len()),
        distinct2: Some(distinct_n(&all_turns, 2).into()),
        distinct3: Some(distinct_n(&all_turns, 3).into()),
        distinct4: Some(distinct_n(&all_turns, 4).into()),
        ..MetricReport::default()
    };

    if args.coherence {
        report.coherence_ratio =
            Some(coherence_ratio(args, &examples, &turns_per_example, vocab, lexicon)?);
    }

    Ok((report, crate::manifest::jsonl_bytes(&rows)?))
}

/// Trains the probe on the train split's reconstructed stories, then scores
/// the generated infills.
fn coherence_ratio(
    args: &EvalArgs,
    examples: &[DialGenExample],
    turns_per_example: &[Vec<Vec<u32>>],
    vocab: &Vocab,
    lexicon: &CharacterLexicon,
) -> Result<f64> {
    let train_examples: Vec<DialGenExample> = read_jsonl(&args.data.join("train.jsonl"))?;
    if train_examples.is_empty() {
        return Err(CliError::data(
            "--coherence needs a non-empty train split to fit the probe",
        ));
    }
    let stories: Vec<Story> = train_examples
        .iter()
        .map(|ex| {
            let tokens = fill_placeholders(&ex.input_tokens, &split_gold(&ex.gold_output));
            Ok(corpus::annotate::annotate(&ex.story_id, tokens, lexicon, vocab, None)?)
        })
        .collect::<Result<_>>()?;
    let cfg = CoherenceConfig { seed: sub_seed(args.seed, "coherence"), ..Default::default() };
    let probe = CoherenceModel::train(cfg, vocab.len(), &stories)?;

    let seqs: Vec<Vec<u32>> = examples
        .iter()
        .zip(turns_per_example)
        .map(|(ex, turns)| fill_placeholders(&ex.input_tokens, turns))
        .collect();
    Ok(probe.coherent_ratio(&seqs)?)
}

fn eval_dialspk<S: Scalar>(
    args: &EvalArgs,
    model: &dyn StoryModel<S>,
    split_path: &Path,
    vocab: &Vocab,
    lexicon: &CharacterLexicon,
) -> Result<(MetricReport, Vec<u8>)> {
    let examples: Vec<DialSpkExample> = read_jsonl(split_path)?;
    if examples.is_empty() {
        return Err(CliError::data(format!("{} has no examples", split_path.display())));
    }

    let pool = worker_pool(args.workers)?;
    let outcomes: Vec<StoryOutcome> = ordered_map(&pool, &examples, |_, ex| {
        let inst = prepare_spk(ex, lexicon, vocab)?;
        let predicted = predict_speakers(model, &inst)
            .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))?;
        Ok(StoryOutcome { story_id: ex.story_id.clone(), predicted, gold: ex.gold.clone() })
    })?;

    let rows: Vec<PredictionRow> = examples
        .iter()
        .zip(&outcomes)
        .map(|(ex, o)| PredictionRow {
            story_id: ex.story_id.clone(),
            candidates: ex.candidates.iter().map(|&c| lexicon.name(c).to_string()).collect(),
            predicted: o.predicted.clone(),
            gold: o.gold.clone(),
        })
        .collect();

    let report = MetricReport {
        speaker: Some(dac_sac(&outcomes)?.into()),
        ..MetricReport::default()
    };
    Ok((report, crate::manifest::jsonl_bytes(&rows)?))
}

fn prepare(
    ex: &DialGenExample,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<model::DialGenInstance> {
    model::prepare_dialgen(ex, lexicon, vocab)
        .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))
}

fn prepare_spk(
    ex: &DialSpkExample,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<model::DialSpkInstance> {
    model::prepare_dialspk(ex, lexicon, vocab)
        .map_err(|e| CliError::data(format!("story {}: {e}", ex.story_id)))
}
