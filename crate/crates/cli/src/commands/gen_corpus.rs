//! gen-corpus: synthesize a story corpus and report its statistics.

use corpus::{CorpusStats, GenConfig};

use crate::args::GenCorpusArgs;
use crate::configs::load_over;
use crate::data::{LEXICON_FILE, STATS_FILE, STORIES_FILE, VOCAB_FILE};
use crate::error::CliError;
use crate::manifest::Run;
use crate::Result;

pub fn run(args: &GenCorpusArgs) -> Result<()> {
    let mut cfg = load_over(GenConfig::default(), args.config.as_deref(), "generation")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stories) = args.stories {
        cfg.stories = stories;
    }
    cfg.validate()?;

    let built = corpus::generate::generate(&cfg)?;
    let stats = CorpusStats::compute(&built.stories, &built.vocab)?;

    let resolved = serde_json::to_value(&cfg)
        .map_err(|e| CliError::data(format!("serializing config: {e}")))?;
    let mut run = Run::new("gen-corpus", &args.out, cfg.seed, resolved);
    if let Some(path) = &args.config {
        run.input(path);
    }
    run.stage_jsonl(STORIES_FILE, &built.stories)?;
    run.stage_json(LEXICON_FILE, &built.lexicon)?;
    run.stage_json(VOCAB_FILE, &built.vocab)?;
    run.stage_json(STATS_FILE, &stats)?;
    run.commit()?;

    println!("{stats}");
    Ok(())
}
