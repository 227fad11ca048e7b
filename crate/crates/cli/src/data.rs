//! On-disk layout shared by the pipeline stages.
//!
//! A corpus directory (from gen-corpus) holds stories.jsonl, lexicon.json,
//! vocab.json, and stats.json. A dataset directory (from build) holds the
//! split files train/valid/test.jsonl plus dataset.json and its own copies
//! of vocab.json and lexicon.json, so later stages need only one path.

use std::path::{Path, PathBuf};

use corpus::{CharacterLexicon, CorpusStats, Story, Vocab};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use train::Task;

use crate::error::CliError;
use crate::Result;

pub const STORIES_FILE: &str = "stories.jsonl";
pub const LEXICON_FILE: &str = "lexicon.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const STATS_FILE: &str = "stats.json";
pub const DATASET_FILE: &str = "dataset.json";

/// Per-split sizes recorded by build.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Dataset metadata: which task the split files belong to and how large
/// each split is (stories fed in, examples that survived the constraints).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: Task,
    pub stories: SplitCounts,
    pub examples: SplitCounts,
}

/// Inputs must exist before any work starts; a missing path is a usage
/// error, a present-but-malformed file is a data error.
pub fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::usage(format!("no such path: {}", path.display())))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(require(path)?)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("parsing {}: {e}", path.display())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(require(path)?)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| {
            CliError::data(format!("parsing {} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

pub fn load_stories(dir: &Path) -> Result<Vec<Story>> {
    let stories: Vec<Story> = read_jsonl(&dir.join(STORIES_FILE))?;
    if stories.is_empty() {
        return Err(CliError::data(format!("{} is empty", dir.join(STORIES_FILE).display())));
    }
    Ok(stories)
}

pub fn load_lexicon(dir: &Path) -> Result<CharacterLexicon> {
    read_json(&dir.join(LEXICON_FILE))
}

pub fn load_vocab(dir: &Path) -> Result<Vocab> {
    let tokens: Vec<String> = read_json(&dir.join(VOCAB_FILE))?;
    Ok(Vocab::from(tokens))
}

pub fn load_stats(dir: &Path) -> Result<CorpusStats> {
    read_json(&dir.join(STATS_FILE))
}

pub fn load_dataset_meta(dir: &Path, expected: Task) -> Result<DatasetMeta> {
    let meta: DatasetMeta = read_json(&dir.join(DATASET_FILE))?;
    if meta.task != expected {
        return Err(CliError::usage(format!(
            "dataset at {} was built for task {}, not {}",
            dir.display(),
            task_name(meta.task),
            task_name(expected)
        )));
    }
    Ok(meta)
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::DialGen => "dial-gen",
        Task::DialSpk => "dial-spk",
    }
}

/// Raw bytes of an input file, for staging verbatim copies.
pub fn copy_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(require(path)?)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))
}

/// Builds a rayon pool of the requested width for order-stable parallel
/// maps; `workers` counts threads, so 1 keeps the work sequential.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::data(format!("worker pool: {e}")))
}

/// Maps `f` over items on the pool, preserving input order, and collects
/// the first error if any item fails.
pub fn ordered_map<T, U, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync,
{
    use rayon::prelude::*;
    pool.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect::<Result<Vec<U>>>()
    })
}

pub fn paths_in(dir: &Path, names: &[&str]) -> Vec<PathBuf> {
    names.iter().map(|n| dir.join(n)).collect()
}
