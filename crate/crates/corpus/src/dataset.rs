//! DialGen / DialSpk dataset builders and story-level splits.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::attribute_speakers;
use crate::story::Story;
use crate::vocab::{Vocab, MASK, PROBE, SEP};

/// Masked-infilling example: every masked turn's contents are replaced by a
/// single placeholder (quote delimiters stay), and the gold output is the
/// masked contents in document order joined by the separator token.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DialGenExample {
    pub story_id: String,
    pub input_tokens: Vec<u32>,
    pub masked_turn_indices: Vec<usize>,
    pub gold_output: Vec<u32>,
}

/// Speaker-recognition example: a probe token precedes each specified turn;
/// gold entries index into `candidates`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DialSpkExample {
    pub story_id: String,
    pub input_tokens: Vec<u32>,
    pub candidates: Vec<u32>,
    pub specified_turns: Vec<usize>,
    pub probe_positions: Vec<usize>,
    pub gold: Vec<usize>,
}

pub struct Build<T> {
    pub examples: Vec<T>,
    /// (story id, reason) for every story that produced no example.
    pub skipped: Vec<(String, String)>,
}

/// Turns eligible for masking: strictly after the first 50 tokens and
/// strictly before the last 30, measured on the original story.
pub fn maskable_turns(story: &Story) -> Vec<usize> {
    let len = story.len();
    story
        .dialogue_turns
        .iter()
        .enumerate()
        .filter(|(_, span)| span.start > 50 && len > 30 && span.end < len - 30)
        .map(|(i, _)| i)
        .collect()
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

pub fn build_dialgen(stories: &[Story], mask_ratio: f64, seed: u64) -> Build<DialGenExample> {
    let mut build = Build { examples: Vec::new(), skipped: Vec::new() };
    for (idx, story) in stories.iter().enumerate() {
        if story.mentioned_characters().len() < 5 {
            build
                .skipped
                .push((story.id.clone(), "fewer than 5 mentioned characters".into()));
            continue;
        }
        let n_turns = story.dialogue_turns.len();
        if n_turns == 0 {
            build.skipped.push((story.id.clone(), "no dialogue turns".into()));
            continue;
        }
        let count = round_half_up(mask_ratio * n_turns as f64).max(1);
        let eligible = maskable_turns(story);
        if eligible.len() < count {
            build.skipped.push((
                story.id.clone(),
                format!("only {} of {count} required maskable turns", eligible.len()),
            ));
            continue;
        }
        let mut rng = numerics::rng::rng_for_indexed(seed, "dialgen", idx as u64);
        let mut masked = sample_without_replacement(&eligible, count, &mut rng);
        masked.sort_unstable();

        let mut input = Vec::with_capacity(story.len());
        let mut gold = Vec::new();
        let mut cursor = 0;
        for (order, &t) in masked.iter().enumerate() {
            let span = story.dialogue_turns[t];
            input.extend_from_slice(&story.tokens[cursor..span.start]);
            input.push(MASK);
            if order > 0 {
                gold.push(SEP);
            }
            gold.extend_from_slice(&story.tokens[span.start..span.end]);
            cursor = span.end;
        }
        input.extend_from_slice(&story.tokens[cursor..]);

        build.examples.push(DialGenExample {
            story_id: story.id.clone(),
            input_tokens: input,
            masked_turn_indices: masked,
            gold_output: gold,
        });
    }
    build
}

/// Speakers used for DialSpk supervision: gold when present and requested,
/// otherwise the attribution heuristic (unattributed turns drop out).
fn resolved_speakers(story: &Story, vocab: &Vocab, use_gold: bool) -> BTreeMap<usize, u32> {
    if use_gold {
        if let Some(gold) = &story.gold_speakers {
            return gold.clone();
        }
    }
    attribute_speakers(story, vocab)
        .into_iter()
        .enumerate()
        .filter_map(|(t, s)| s.map(|c| (t, c)))
        .collect()
}

pub fn build_dialspk(
    stories: &[Story],
    vocab: &Vocab,
    probe_ratio: f64,
    seed: u64,
    use_gold: bool,
) -> Build<DialSpkExample> {
    let mut build = Build { examples: Vec::new(), skipped: Vec::new() };
    for (idx, story) in stories.iter().enumerate() {
        let candidates = story.mentioned_characters();
        if candidates.is_empty() {
            build.skipped.push((story.id.clone(), "no mentioned characters".into()));
            continue;
        }
        let speakers = resolved_speakers(story, vocab, use_gold);
        let eligible: Vec<usize> = (0..story.dialogue_turns.len())
            .filter(|t| speakers.get(t).is_some_and(|s| candidates.contains(s)))
            .collect();
        if eligible.is_empty() {
            build.skipped.push((story.id.clone(), "no attributable turns".into()));
            continue;
        }
        let m = round_half_up(probe_ratio * eligible.len() as f64).clamp(1, eligible.len());
        let mut rng = numerics::rng::rng_for_indexed(seed, "dialspk", idx as u64);
        let mut specified = sample_without_replacement(&eligible, m, &mut rng);
        specified.sort_unstable();

        let mut input = Vec::with_capacity(story.len() + m);
        let mut probe_positions = Vec::with_capacity(m);
        let mut cursor = 0;
        for &t in &specified {
            let open = story.dialogue_turns[t].start - 1;
            input.extend_from_slice(&story.tokens[cursor..open]);
            probe_positions.push(input.len());
            input.push(PROBE);
            cursor = open;
        }
        input.extend_from_slice(&story.tokens[cursor..]);

        let gold = specified
            .iter()
            .map(|t| {
                let speaker = speakers[t];
                candidates.iter().position(|&c| c == speaker).expect("eligible implies member")
            })
            .collect();

        build.examples.push(DialSpkExample {
            story_id: story.id.clone(),
            input_tokens: input,
            candidates,
            specified_turns: specified,
            probe_positions,
            gold,
        });
    }
    build
}

fn sample_without_replacement(pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool = pool.to_vec();
    for i in 0..count {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// Story-index split, 90/5/5 by default, disjoint and covering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_stories(n: usize, seed: u64) -> SplitIndices {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = numerics::rng::rng_for(seed, "split");
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let held = if n >= 20 { (n / 20).max(1) } else if n >= 3 { 1 } else { 0 };
    let mut test: Vec<usize> = order.drain(..held).collect();
    let mut val: Vec<usize> = order.drain(..held).collect();
    let mut train = order;
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    SplitIndices { train, val, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenConfig};
    use crate::story::Span;
    use crate::vocab::{CLOSE_QUOTE, OPEN_QUOTE};

    fn corpus() -> crate::generate::GeneratedCorpus {
        generate(&GenConfig { stories: 10, seed: 21, ..Default::default() }).unwrap()
    }

    #[test]
    fn mask_count_is_round_half_up_of_ratio() {
        assert_eq!(round_half_up(0.3 * 10.0), 3);
        assert_eq!(round_half_up(0.3 * 11.0), 3); // 3.3
        assert_eq!(round_half_up(0.3 * 12.0), 4); // 3.6
        assert_eq!(round_half_up(0.3 * 5.0), 2); // 1.5 rounds up
    }

    #[test]
    fn dialgen_placeholder_count_matches_gold_turns() {
        let c = corpus();
        let build = build_dialgen(&c.stories, 0.3, 5);
        assert!(build.skipped.is_empty());
        for ex in &build.examples {
            let masks = ex.input_tokens.iter().filter(|&&t| t == MASK).count();
            assert_eq!(masks, ex.masked_turn_indices.len());
            let seps = ex.gold_output.iter().filter(|&&t| t == SEP).count();
            assert_eq!(seps, masks - 1);
            let story = c.stories.iter().find(|s| s.id == ex.story_id).unwrap();
            let expected =
                round_half_up(0.3 * story.dialogue_turns.len() as f64).max(1);
            assert_eq!(masks, expected);
        }
    }

    #[test]
    fn dialgen_keeps_quote_delimiters_around_placeholders() {
        let c = corpus();
        let build = build_dialgen(&c.stories, 0.3, 5);
        for ex in &build.examples {
            for (i, &tok) in ex.input_tokens.iter().enumerate() {
                if tok == MASK {
                    assert_eq!(ex.input_tokens[i - 1], OPEN_QUOTE);
                    assert_eq!(ex.input_tokens[i + 1], CLOSE_QUOTE);
                }
            }
        }
    }

    #[test]
    fn dialgen_gold_matches_story_contents() {
        let c = corpus();
        let build = build_dialgen(&c.stories, 0.3, 5);
        let ex = &build.examples[0];
        let story = c.stories.iter().find(|s| s.id == ex.story_id).unwrap();
        let mut expected = Vec::new();
        for (order, &t) in ex.masked_turn_indices.iter().enumerate() {
            if order > 0 {
                expected.push(SEP);
            }
            let span = story.dialogue_turns[t];
            expected.extend_from_slice(&story.tokens[span.start..span.end]);
        }
        assert_eq!(ex.gold_output, expected);
    }

    #[test]
    fn dialgen_same_seed_same_choices() {
        let c = corpus();
        let a = build_dialgen(&c.stories, 0.3, 5);
        let b = build_dialgen(&c.stories, 0.3, 5);
        let pick = |b: &Build<DialGenExample>| -> Vec<Vec<usize>> {
            b.examples.iter().map(|e| e.masked_turn_indices.clone()).collect()
        };
        assert_eq!(pick(&a), pick(&b));
        let d = build_dialgen(&c.stories, 0.3, 6);
        assert_ne!(pick(&a), pick(&d));
    }

    #[test]
    fn story_with_no_maskable_turn_is_skipped() {
        let mut story = corpus().stories[0].clone();
        // Pretend every turn sits inside the protected head zone.
        story.dialogue_turns = vec![Span::new(2, 4); story.dialogue_turns.len()];
        let build = build_dialgen(std::slice::from_ref(&story), 0.3, 5);
        assert!(build.examples.is_empty());
        assert_eq!(build.skipped.len(), 1);
        assert!(build.skipped[0].1.contains("maskable"));
    }

    #[test]
    fn dialspk_ratio_one_probes_every_attributable_turn() {
        let c = corpus();
        let build = build_dialspk(&c.stories, &c.vocab, 1.0, 5, true);
        assert!(build.skipped.is_empty());
        for ex in &build.examples {
            let story = c.stories.iter().find(|s| s.id == ex.story_id).unwrap();
            assert_eq!(ex.specified_turns.len(), story.dialogue_turns.len());
            assert_eq!(ex.probe_positions.len(), ex.gold.len());
        }
    }

    #[test]
    fn dialspk_probes_precede_their_turns() {
        let c = corpus();
        let build = build_dialspk(&c.stories, &c.vocab, 0.5, 5, true);
        for ex in &build.examples {
            for &pos in &ex.probe_positions {
                assert_eq!(ex.input_tokens[pos], PROBE);
                assert_eq!(ex.input_tokens[pos + 1], OPEN_QUOTE);
            }
        }
    }

    #[test]
    fn dialspk_gold_resolves_through_candidates() {
        let c = corpus();
        let build = build_dialspk(&c.stories, &c.vocab, 1.0, 5, true);
        for ex in &build.examples {
            let story = c.stories.iter().find(|s| s.id == ex.story_id).unwrap();
            let gold_map = story.gold_speakers.as_ref().unwrap();
            let mut seen = std::collections::HashSet::new();
            for &cand in &ex.candidates {
                assert!(seen.insert(cand), "duplicate candidate");
            }
            for (&t, &g) in ex.specified_turns.iter().zip(&ex.gold) {
                assert_eq!(ex.candidates[g], gold_map[&t]);
            }
        }
    }

    #[test]
    fn dialspk_heuristic_mode_skips_unattributable_turns() {
        let c = corpus();
        let build = build_dialspk(&c.stories, &c.vocab, 1.0, 5, false);
        for ex in &build.examples {
            let story = c.stories.iter().find(|s| s.id == ex.story_id).unwrap();
            let attributed = attribute_speakers(story, &c.vocab);
            for &t in &ex.specified_turns {
                assert!(attributed[t].is_some());
            }
        }
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let s = split_stories(100, 9);
        assert_eq!(s.val.len(), 5);
        assert_eq!(s.test.len(), 5);
        assert_eq!(s.train.len(), 90);
        let mut all: Vec<usize> =
            s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_seed_stable() {
        let a = split_stories(50, 1);
        let b = split_stories(50, 1);
        assert_eq!(a.train, b.train);
        let c = split_stories(50, 2);
        assert_ne!(a.train, c.train);
    }
}
