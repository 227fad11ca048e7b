//! build: split a corpus into train/valid/test and emit task examples.

use corpus::dataset::{build_dialgen, build_dialspk, Build, SplitIndices};
use corpus::{Story, Vocab};
use numerics::sub_seed;
use serde::Serialize;
use serde_json::json;
use train::Task;

use crate::args::BuildArgs;
use crate::data::{
    copy_bytes, load_stories, load_vocab, task_name, DatasetMeta, SplitCounts, DATASET_FILE,
    LEXICON_FILE, STORIES_FILE, VOCAB_FILE,
};
use crate::error::CliError;
use crate::manifest::{jsonl_bytes, Run};
use crate::Result;

pub const SKIPPED_FILE: &str = "skipped.jsonl";
pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Serialize)]
struct SkippedRow<'a> {
    split: &'static str,
    story_id: &'a str,
    reason: &'a str,
}

/// Shuffles story indices under the command seed and cuts them by ratio.
/// Val and test sizes round to the nearest story; the remainder trains.
pub fn split_by_ratio(
    n: usize,
    train: f64,
    val: f64,
    test: f64,
    seed: u64,
) -> Result<SplitIndices> {
    for (name, r) in [("--train-ratio", train), ("--val-ratio", val), ("--test-ratio", test)] {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(CliError::usage(format!("{name} must be in [0, 1], got {r}")));
        }
    }
    let sum = train + val + test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CliError::usage(format!("split ratios must sum to 1, got {sum}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = numerics::rng_for(seed, "split");
    for i in (1..order.len()).rev() {
        use rand::Rng;
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_test = (n as f64 * test).round() as usize;
    let n_val = (n as f64 * val).round() as usize;
    if n_test + n_val > n {
        return Err(CliError::data(format!(
            "{n} stories cannot fill validation ({n_val}) and test ({n_test}) splits"
        )));
    }
    let mut test: Vec<usize> = order.drain(..n_test).collect();
    let mut val: Vec<usize> = order.drain(..n_val).collect();
    let mut train = order;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

/// Builders take contiguous slices; the split is materialized by cloning.
fn pick(stories: &[Story], indices: &[usize]) -> Vec<Story> {
    indices.iter().map(|&i| stories[i].clone()).collect()
}

fn build_split(
    task: Task,
    stories: &[Story],
    vocab: &Vocab,
    args: &BuildArgs,
    split: &'static str,
) -> Result<(Vec<u8>, usize, Vec<(String, String)>)> {
    let seed = sub_seed(args.seed, &format!("build.{split}"));
    match task {
        Task::DialGen => {
            if !(args.mask_ratio > 0.0 && args.mask_ratio <= 1.0) {
                return Err(CliError::usage(format!(
                    "--mask-ratio must be in (0, 1], got {}",
                    args.mask_ratio
                )));
            }
            let Build { examples, skipped } = build_dialgen(stories, args.mask_ratio, seed);
            Ok((jsonl_bytes(&examples)?, examples.len(), skipped))
        }
        Task::DialSpk => {
            if !(args.probe_ratio > 0.0 && args.probe_ratio <= 1.0) {
                return Err(CliError::usage(format!(
                    "--probe-ratio must be in (0, 1], got {}",
                    args.probe_ratio
                )));
            }
            let use_gold = !args.heuristic_speakers;
            let Build { examples, skipped } =
                build_dialspk(stories, vocab, args.probe_ratio, seed, use_gold);
            Ok((jsonl_bytes(&examples)?, examples.len(), skipped))
        }
    }
}

pub fn run(args: &BuildArgs) -> Result<()> {
    let task: Task = args.task.into();
    let stories = load_stories(&args.corpus)?;
    let vocab = load_vocab(&args.corpus)?;

    let split =
        split_by_ratio(stories.len(), args.train_ratio, args.val_ratio, args.test_ratio, args.seed)?;

    let mut files = Vec::new();
    let mut skipped_rows = Vec::new();
    let mut story_counts = [0usize; 3];
    let mut example_counts = [0usize; 3];
    let splits = [&split.train, &split.val, &split.test];
    let mut skipped_store: Vec<(&'static str, Vec<(String, String)>)> = Vec::new();
    for (k, (&indices, name)) in splits.iter().zip(SPLIT_NAMES).enumerate() {
        let subset = pick(&stories, indices);
        let (bytes, count, skipped) = build_split(task, &subset, &vocab, args, name)?;
        story_counts[k] = subset.len();
        example_counts[k] = count;
        files.push((format!("{name}.jsonl"), bytes));
        skipped_store.push((name, skipped));
    }
    for (name, skipped) in &skipped_store {
        for (story_id, reason) in skipped {
            skipped_rows.push(SkippedRow { split: name, story_id, reason });
        }
    }
    if example_counts.iter().sum::<usize>() == 0 {
        return Err(CliError::data(format!(
            "every story was skipped; no {} examples could be built",
            task_name(task)
        )));
    }

    let meta = DatasetMeta {
        task,
        stories: SplitCounts {
            train: story_counts[0],
            valid: story_counts[1],
            test: story_counts[2],
        },
        examples: SplitCounts {
            train: example_counts[0],
            valid: example_counts[1],
            test: example_counts[2],
        },
    };

    let config = json!({
        "task": task,
        "seed": args.seed,
        "train_ratio": args.train_ratio,
        "val_ratio": args.val_ratio,
        "test_ratio": args.test_ratio,
        "mask_ratio": args.mask_ratio,
        "probe_ratio": args.probe_ratio,
        "heuristic_speakers": args.heuristic_speakers,
    });
    let mut run = Run::new("build", &args.out, args.seed, config);
    run.input(&args.corpus.join(STORIES_FILE));
    run.input(&args.corpus.join(VOCAB_FILE));
    run.input(&args.corpus.join(LEXICON_FILE));
    for (name, bytes) in files {
        run.stage(&name, bytes);
    }
    run.stage_jsonl(SKIPPED_FILE, &skipped_rows)?;
    run.stage_json(DATASET_FILE, &meta)?;
    // Verbatim copies keep the dataset directory self-contained.
    run.stage(VOCAB_FILE, copy_bytes(&args.corpus.join(VOCAB_FILE))?);
    run.stage(LEXICON_FILE, copy_bytes(&args.corpus.join(LEXICON_FILE))?);
    run.commit()?;

    if !skipped_rows.is_empty() {
        eprintln!("skipped {} stories; reasons in {SKIPPED_FILE}", skipped_rows.len());
    }
    println!(
        "built {} examples: train {} / valid {} / test {} (from {} stories)",
        task_name(task),
        example_counts[0],
        example_counts[1],
        example_counts[2],
        stories.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_splits_are_disjoint_and_cover() {
        let s = split_by_ratio(40, 0.9, 0.05, 0.05, 7).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 40);
        assert_eq!(s.val.len(), 2);
        assert_eq!(s.test.len(), 2);
        let mut all: Vec<usize> =
            s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let err = split_by_ratio(10, 0.9, 0.05, 0.1, 7).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("sum to 1"), "{err}");
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = split_by_ratio(100, 0.8, 0.1, 0.1, 3).unwrap();
        let b = split_by_ratio(100, 0.8, 0.1, 0.1, 3).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = split_by_ratio(100, 0.8, 0.1, 0.1, 4).unwrap();
        assert_ne!(a.test, c.test);
    }
}
