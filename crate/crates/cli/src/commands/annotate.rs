//! annotate: recover turns, mentions, and speakers from tokens alone.
//!
//! The input stories' own annotation is discarded and re-derived, so this
//! doubles as a verification pass: for generated corpora the recovered
//! structure must match what the generator recorded.

use corpus::annotate::{annotate, attribute_speakers};
use corpus::Story;
use serde::{Deserialize, Serialize};

use crate::args::AnnotateArgs;
use crate::data::{
    load_lexicon, load_stories, load_vocab, ordered_map, worker_pool, LEXICON_FILE, STORIES_FILE,
    VOCAB_FILE,
};
use crate::manifest::Run;
use crate::Result;

pub const ANNOTATED_FILE: &str = "annotated.jsonl";
pub const ATTRIBUTION_FILE: &str = "attribution.jsonl";

/// Heuristic speaker per dialogue turn; `speakers[t]` is None when no
/// attribution pattern matched turn `t`.
#[derive(Debug, Serialize, Deserialize)]
pub struct AttributionRow {
    pub story_id: String,
    pub speakers: Vec<Option<u32>>,
    pub names: Vec<Option<String>>,
}

pub fn run(args: &AnnotateArgs) -> Result<()> {
    let stories = load_stories(&args.corpus)?;
    let lexicon = load_lexicon(&args.corpus)?;
    let vocab = load_vocab(&args.corpus)?;
    let pool = worker_pool(args.workers)?;

    let annotated: Vec<(Story, Vec<Option<u32>>)> = ordered_map(&pool, &stories, |_, story| {
        let fresh = annotate(
            &story.id,
            story.tokens.clone(),
            &lexicon,
            &vocab,
            story.gold_speakers.clone(),
        )?;
        let speakers = attribute_speakers(&fresh, &vocab);
        Ok((fresh, speakers))
    })?;

    let mut rows = Vec::with_capacity(annotated.len());
    let mut turns = 0usize;
    let mut attributed = 0usize;
    let mut checked = 0usize;
    let mut agreed = 0usize;
    for (story, speakers) in &annotated {
        turns += speakers.len();
        attributed += speakers.iter().flatten().count();
        if let Some(gold) = &story.gold_speakers {
            for (t, g) in gold {
                if let Some(Some(p)) = speakers.get(*t) {
                    checked += 1;
                    agreed += usize::from(p == g);
                }
            }
        }
        rows.push(AttributionRow {
            story_id: story.id.clone(),
            names: speakers
                .iter()
                .map(|s| s.map(|id| lexicon.name(id).to_string()))
                .collect(),
            speakers: speakers.clone(),
        });
    }

    let mut run = Run::new("annotate", &args.out, 0, serde_json::Value::Null);
    for name in [STORIES_FILE, LEXICON_FILE, VOCAB_FILE] {
        run.input(&args.corpus.join(name));
    }
    let fresh: Vec<&Story> = annotated.iter().map(|(s, _)| s).collect();
    run.stage_jsonl(ANNOTATED_FILE, &fresh)?;
    run.stage_jsonl(ATTRIBUTION_FILE, &rows)?;
    run.commit()?;

    println!("attributed {attributed}/{turns} dialogue turns");
    if checked > 0 {
        println!(
            "agreement with gold speakers: {agreed}/{checked} ({:.1}%)",
            100.0 * agreed as f64 / checked as f64
        );
    }
    Ok(())
}
