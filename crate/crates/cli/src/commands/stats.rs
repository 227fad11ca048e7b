//! stats: corpus statistics table, optionally written as an artifact.

use corpus::CorpusStats;

use crate::args::StatsArgs;
use crate::data::{load_stories, load_vocab, STATS_FILE, STORIES_FILE, VOCAB_FILE};
use crate::manifest::Run;
use crate::Result;

pub fn run(args: &StatsArgs) -> Result<()> {
    let stories = load_stories(&args.corpus)?;
    let vocab = load_vocab(&args.corpus)?;
    let stats = CorpusStats::compute(&stories, &vocab)?;

    if let Some(out) = &args.out {
        // Statistics consume no randomness; the manifest's seed slot is 0.
        let mut run = Run::new("stats", out, 0, serde_json::Value::Null);
        run.input(&args.corpus.join(STORIES_FILE));
        run.input(&args.corpus.join(VOCAB_FILE));
        run.stage_json(STATS_FILE, &stats)?;
        run.commit()?;
    }

    println!("{stats}");
    Ok(())
}
