//! Model-ready views of dataset examples.
//!
//! Mentions are re-detected on the example's own token stream (masking and
//! probe insertion never touch narration, so first-mention order matches the
//! dataset's candidate order).

use corpus::annotate::{detect_mentions, extract_dialogue_turns};
use corpus::{CharacterLexicon, DialGenExample, DialSpkExample, Vocab};

use crate::error::ModelError;
use crate::Result;

/// A dialogue-infilling example with per-character mention positions.
#[derive(Clone, Debug)]
pub struct DialGenInstance {
    pub story_id: String,
    pub input: Vec<u32>,
    /// Gold ids to teacher-force: turn contents joined by separators.
    pub target: Vec<u32>,
    /// Number of masked placeholders in `input`.
    pub placeholders: usize,
    /// Bank characters in first-mention order.
    pub characters: Vec<u32>,
    /// Per bank entry: every input position inside one of its mentions.
    pub mentions: Vec<Vec<usize>>,
}

/// A speaker-recognition example with candidate mention positions.
#[derive(Clone, Debug)]
pub struct DialSpkInstance {
    pub story_id: String,
    pub input: Vec<u32>,
    pub probe_positions: Vec<usize>,
    pub candidates: Vec<u32>,
    /// Aligned with `candidates`.
    pub mentions: Vec<Vec<usize>>,
    /// Aligned with `probe_positions`; indices into `candidates`.
    pub gold: Vec<usize>,
}

fn mention_positions(
    story_id: &str,
    tokens: &[u32],
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<(Vec<u32>, Vec<Vec<usize>>)> {
    let turns = extract_dialogue_turns(tokens, story_id)?;
    let scan = detect_mentions(tokens, &turns, lexicon, vocab);
    let mut order: Vec<u32> = Vec::new();
    let mut positions: Vec<Vec<usize>> = Vec::new();
    for m in &scan.narration {
        let slot = match order.iter().position(|&c| c == m.character) {
            Some(i) => i,
            None => {
                order.push(m.character);
                positions.push(Vec::new());
                order.len() - 1
            }
        };
        positions[slot].extend(m.start..m.end);
    }
    Ok((order, positions))
}

pub fn prepare_dialgen(
    example: &DialGenExample,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<DialGenInstance> {
    if example.gold_output.is_empty() {
        return Err(ModelError::EmptyGold);
    }
    let (characters, mentions) =
        mention_positions(&example.story_id, &example.input_tokens, lexicon, vocab)?;
    if characters.is_empty() {
        return Err(ModelError::EmptyBank);
    }
    Ok(DialGenInstance {
        story_id: example.story_id.clone(),
        input: example.input_tokens.clone(),
        target: example.gold_output.clone(),
        placeholders: example.masked_turn_indices.len(),
        characters,
        mentions,
    })
}

pub fn prepare_dialspk(
    example: &DialSpkExample,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> Result<DialSpkInstance> {
    if example.probe_positions.len() != example.gold.len() {
        return Err(ModelError::ProbeMismatch {
            probes: example.probe_positions.len(),
            golds: example.gold.len(),
        });
    }
    if example.probe_positions.is_empty() {
        return Err(ModelError::EmptyGold);
    }
    let (order, order_positions) =
        mention_positions(&example.story_id, &example.input_tokens, lexicon, vocab)?;
    // Candidate order is defined by the dataset; re-detection must agree.
    if order != example.candidates {
        return Err(ModelError::Meta(format!(
            "story {}: candidate order diverged from mention scan",
            example.story_id
        )));
    }
    for (i, &g) in example.gold.iter().enumerate() {
        if g >= example.candidates.len() {
            return Err(ModelError::GoldOutOfRange { index: i, candidates: example.candidates.len() });
        }
    }
    for (k, pos) in order_positions.iter().enumerate() {
        if pos.is_empty() {
            return Err(ModelError::EmptyMentions { index: k });
        }
    }
    Ok(DialSpkInstance {
        story_id: example.story_id.clone(),
        input: example.input_tokens.clone(),
        probe_positions: example.probe_positions.clone(),
        candidates: example.candidates.clone(),
        mentions: order_positions,
        gold: example.gold.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use corpus::dataset::{build_dialgen, build_dialspk};
    use corpus::GenConfig;

    fn small_corpus() -> corpus::generate::GeneratedCorpus {
        let cfg = GenConfig { stories: 4, seed: 90, ..GenConfig::default() };
        corpus::generate::generate(&cfg).unwrap()
    }

    #[test]
    fn dialgen_instance_covers_all_bank_characters() {
        let corpus = small_corpus();
        let built = build_dialgen(&corpus.stories, 0.3, 11);
        assert!(!built.examples.is_empty());
        for ex in &built.examples {
            let inst = prepare_dialgen(ex, &corpus.lexicon, &corpus.vocab).unwrap();
            assert!(inst.characters.len() >= 5);
            assert_eq!(inst.characters.len(), inst.mentions.len());
            for (k, pos) in inst.mentions.iter().enumerate() {
                assert!(!pos.is_empty(), "character slot {k} has no mentions");
                for &p in pos {
                    assert!(p < inst.input.len());
                }
            }
            assert_eq!(inst.placeholders, ex.masked_turn_indices.len());
        }
    }

    #[test]
    fn dialspk_instance_aligns_candidates_with_mention_order() {
        let corpus = small_corpus();
        let built = build_dialspk(&corpus.stories, &corpus.vocab, 0.5, 12, true);
        assert!(!built.examples.is_empty());
        for ex in &built.examples {
            let inst = prepare_dialspk(ex, &corpus.lexicon, &corpus.vocab).unwrap();
            assert_eq!(inst.candidates, ex.candidates);
            assert_eq!(inst.mentions.len(), inst.candidates.len());
            for &p in &inst.probe_positions {
                assert_eq!(inst.input[p], corpus::vocab::PROBE);
            }
        }
    }

    #[test]
    fn mismatched_probe_and_gold_lengths_error() {
        let corpus = small_corpus();
        let built = build_dialspk(&corpus.stories, &corpus.vocab, 0.5, 12, true);
        let mut ex = built.examples[0].clone();
        ex.gold.push(0);
        let err = prepare_dialspk(&ex, &corpus.lexicon, &corpus.vocab).unwrap_err();
        assert!(matches!(err, ModelError::ProbeMismatch { .. }));
    }

    #[test]
    fn out_of_range_gold_errors() {
        let corpus = small_corpus();
        let built = build_dialspk(&corpus.stories, &corpus.vocab, 0.5, 12, true);
        let mut ex = built.examples[0].clone();
        let last = ex.gold.len() - 1;
        ex.gold[last] = ex.candidates.len();
        let err = prepare_dialspk(&ex, &corpus.lexicon, &corpus.vocab).unwrap_err();
        assert!(matches!(err, ModelError::GoldOutOfRange { .. }));
    }
}
