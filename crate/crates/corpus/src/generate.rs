//! Synthetic story generator with full ground truth.
//!
//! Stories interleave name-free narration with attributed dialogue turns.
//! Each character draws spoken content from a private style vocabulary, so
//! speaker identity is recoverable from the text itself. Layout guarantees:
//! at least 52 tokens before the first turn and 31 after the last (so every
//! turn is maskable), all character names outside quotes, and a per-story
//! dialogue-token ratio inside the configured window.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::annotate;
use crate::error::CorpusError;
use crate::story::{Character, CharacterLexicon, Story};
use crate::vocab::Vocab;
use crate::Result;

const SINGLE_NAMES: [&str; 18] = [
    "Mira", "Talen", "Wu", "Mei", "Ko", "Brant", "Sella", "Dorn", "Yara", "Fenn", "Liso",
    "Pirel", "Oda", "Rukh", "Vess", "Tamsin", "Holt", "Ines",
];

// Two-token names deliberately share their second token with a single-token
// character, so mention detection must prefer the longest match.
const DOUBLE_NAMES: [(&str, &str); 6] = [
    ("Old", "Wu"),
    ("Aunt", "Mei"),
    ("Master", "Ko"),
    ("Young", "Fenn"),
    ("Lady", "Vess"),
    ("Captain", "Holt"),
];

const NARRATION: [&str; 40] = [
    "the", "a", "and", "then", "while", "near", "under", "wind", "river", "lantern", "bridge",
    "market", "garden", "stone", "path", "evening", "morning", "rain", "dust", "shadow", "door",
    "roof", "field", "boat", "letter", "fire", "snow", "hill", "walked", "waited", "watched",
    "turned", "carried", "gathered", "rested", "crossed", "lingered", "hurried", "followed",
    "paused",
];

const COMMON_DIALOGUE: [&str; 10] =
    ["yes", "no", "well", "oh", "hm", "indeed", "perhaps", "soon", "never", "always"];

const VERBS: [&str; 4] = ["said", "replied", "whispered", "shouted"];

const ONSETS: [&str; 12] =
    ["br", "cl", "dr", "fl", "gr", "kr", "pl", "sk", "tr", "vr", "sn", "mal"];
const RIMES: [&str; 20] = [
    "ath", "eem", "iv", "osk", "une", "ald", "orn", "ipp", "ull", "ett", "ank", "ins", "ox",
    "ay", "urm", "eld", "oth", "ish", "un", "ar",
];

const STYLE_WORDS_PER_CHARACTER: usize = 10;
const POOL_SIZE: usize = SINGLE_NAMES.len() + DOUBLE_NAMES.len();

/// Minimum narration tokens before the first turn / after the last, keeping
/// every turn outside the protected masking zones.
const HEAD_PAD: usize = 52;
const TAIL_PAD: usize = 31;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub stories: usize,
    pub characters_per_story: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    pub min_turn_tokens: usize,
    pub max_turn_tokens: usize,
    /// Per-story dialogue-token ratio window; must sit inside [0.30, 0.50].
    pub ratio_low: f64,
    pub ratio_high: f64,
    /// Probability that a turn continuing the same speaker drops its
    /// attribution phrase entirely.
    pub implicit_turn_ratio: f64,
    /// Probability a spoken token comes from the speaker's own style
    /// vocabulary (the rest come from a shared filler pool).
    pub style_fidelity: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            stories: 200,
            characters_per_story: 5,
            min_turns: 10,
            max_turns: 14,
            min_turn_tokens: 6,
            max_turn_tokens: 10,
            ratio_low: 0.34,
            ratio_high: 0.44,
            implicit_turn_ratio: 0.5,
            style_fidelity: 0.9,
            seed: 17,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(CorpusError::InvalidConfig(msg.to_string()));
        if self.stories == 0 {
            return fail("stories must be positive");
        }
        if self.characters_per_story < 5 || self.characters_per_story > POOL_SIZE {
            return fail("characters_per_story must be in 5..=24");
        }
        if self.min_turns < 10 || self.min_turns > self.max_turns {
            return fail("turns must satisfy 10 <= min <= max");
        }
        if self.min_turn_tokens < 2 || self.min_turn_tokens > self.max_turn_tokens {
            return fail("turn tokens must satisfy 2 <= min <= max");
        }
        if !(0.30..=0.50).contains(&self.ratio_low)
            || !(0.30..=0.50).contains(&self.ratio_high)
            || self.ratio_low > self.ratio_high
        {
            return fail("ratio window must sit inside [0.30, 0.50]");
        }
        if !(0.0..=1.0).contains(&self.implicit_turn_ratio) {
            return fail("implicit_turn_ratio must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.style_fidelity) {
            return fail("style_fidelity must be in [0, 1]");
        }
        Ok(())
    }
}

/// The fixed 24-character lexicon shared by all corpora: global ids, name
/// tokens, and disjoint style vocabularies.
pub fn character_pool() -> CharacterLexicon {
    let style = |id: usize| -> Vec<String> {
        (id * STYLE_WORDS_PER_CHARACTER..(id + 1) * STYLE_WORDS_PER_CHARACTER)
            .map(|i| format!("{}{}", ONSETS[i % ONSETS.len()], RIMES[(i / ONSETS.len()) % RIMES.len()]))
            .collect()
    };
    let mut characters = Vec::with_capacity(POOL_SIZE);
    for (i, name) in SINGLE_NAMES.iter().enumerate() {
        characters.push(Character {
            id: i as u32,
            name: name.to_string(),
            name_tokens: vec![name.to_string()],
            style_words: style(i),
        });
    }
    for (j, (first, second)) in DOUBLE_NAMES.iter().enumerate() {
        let id = SINGLE_NAMES.len() + j;
        characters.push(Character {
            id: id as u32,
            name: format!("{first} {second}"),
            name_tokens: vec![first.to_string(), second.to_string()],
            style_words: style(id),
        });
    }
    CharacterLexicon { characters }
}

pub struct GeneratedCorpus {
    pub stories: Vec<Story>,
    pub lexicon: CharacterLexicon,
    pub vocab: Vocab,
}

pub fn generate(config: &GenConfig) -> Result<GeneratedCorpus> {
    config.validate()?;
    let lexicon = character_pool();
    let mut raw: Vec<(Vec<String>, BTreeMap<usize, u32>)> = Vec::with_capacity(config.stories);
    for i in 0..config.stories {
        let mut rng = numerics::rng::rng_for_indexed(config.seed, "story", i as u64);
        raw.push(build_story(config, &lexicon, &mut rng));
    }

    let vocab = Vocab::from_corpus(
        raw.iter().flat_map(|(tokens, _)| tokens.iter().map(String::as_str)),
    );

    let mut stories = Vec::with_capacity(raw.len());
    for (i, (tokens, gold)) in raw.into_iter().enumerate() {
        let id = format!("story-{i:05}");
        let ids = vocab.encode(tokens.iter().map(String::as_str));
        let story = annotate(&id, ids, &lexicon, &vocab, Some(gold))?;
        debug_assert_eq!(
            story.dialogue_turns.len(),
            story.gold_speakers.as_ref().map_or(0, BTreeMap::len),
            "{id}: turn count mismatch"
        );
        let ratio = story.dialogue_token_ratio();
        if !(0.30..=0.50).contains(&ratio) {
            return Err(CorpusError::Malformed {
                story_id: id,
                reason: format!("dialogue ratio {ratio:.3} outside [0.30, 0.50]"),
            });
        }
        stories.push(story);
    }
    Ok(GeneratedCorpus { stories, lexicon, vocab })
}

#[derive(Clone, Copy, PartialEq)]
enum Pattern {
    Pre,
    Post,
    Implicit,
}

struct TurnPlan {
    speaker: u32,
    pattern: Pattern,
    content: Vec<String>,
}

fn build_story(
    config: &GenConfig,
    lexicon: &CharacterLexicon,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, BTreeMap<usize, u32>) {
    let k = config.characters_per_story;
    let cast = sample_cast(k, rng);
    let n_turns = rng.gen_range(config.min_turns..=config.max_turns);
    let target_ratio = rng.gen_range(config.ratio_low..=config.ratio_high);

    let mut turns = plan_turns(config, lexicon, &cast, n_turns, rng);

    // Narration frame: an intro naming the whole cast, padding sentences to
    // push the first turn past the protected head zone, and a tail.
    let intro = intro_sentence(lexicon, &cast, rng);
    let mut head: Vec<Vec<String>> = vec![intro];
    while head.iter().map(Vec::len).sum::<usize>() < HEAD_PAD {
        let len = rng.gen_range(5..=9);
        head.push(narration_sentence(len, rng));
    }
    let mut tail: Vec<Vec<String>> = Vec::new();
    while tail.iter().map(Vec::len).sum::<usize>() < TAIL_PAD {
        let len = rng.gen_range(5..=9);
        tail.push(narration_sentence(len, rng));
    }

    // Solve the dialogue-token ratio: first lengthen turns if narration
    // overhead forces the ratio below target, then pad narration up to the
    // target total.
    let frame_tokens = |head: &[Vec<String>], tail: &[Vec<String>]| -> usize {
        head.iter().map(Vec::len).sum::<usize>() + tail.iter().map(Vec::len).sum::<usize>()
    };
    let turn_overhead: usize = turns
        .iter()
        .map(|t| {
            2 + match t.pattern {
                Pattern::Pre => lexicon.get(t.speaker).unwrap().name_tokens.len() + 2,
                Pattern::Post => lexicon.get(t.speaker).unwrap().name_tokens.len() + 3,
                Pattern::Implicit => 0,
            }
        })
        .sum();
    let overhead = frame_tokens(&head, &tail) + turn_overhead;
    let mut dialogue: usize = turns.iter().map(|t| t.content.len()).sum();
    let needed = ((overhead as f64) * target_ratio / (1.0 - target_ratio)).ceil() as usize;
    let mut extra = needed.saturating_sub(dialogue);
    while extra > 0 {
        let t = rng.gen_range(0..turns.len());
        let speaker = turns[t].speaker;
        let word = spoken_word(config, lexicon, speaker, rng);
        turns[t].content.push(word);
        dialogue += 1;
        extra -= 1;
    }
    let total_target = (dialogue as f64 / target_ratio).round() as usize;
    let mut inter: Vec<Vec<Vec<String>>> = vec![Vec::new(); turns.len().saturating_sub(1)];
    let mut slack = total_target.saturating_sub(dialogue + overhead);
    // Whole sentences between turns first, then single-word growth of
    // existing narration sentences to land exactly on the target.
    while slack >= 8 && !inter.is_empty() {
        let gap = rng.gen_range(0..inter.len());
        inter[gap].push(narration_sentence(7, rng));
        slack -= 8;
    }
    while slack > 0 {
        let sentence = if rng.gen_bool(0.5) || tail.is_empty() {
            let i = rng.gen_range(0..head.len().max(1));
            &mut head[i]
        } else {
            let i = rng.gen_range(0..tail.len());
            &mut tail[i]
        };
        let dot = sentence.len() - 1;
        sentence.insert(dot, NARRATION[rng.gen_range(3..NARRATION.len())].to_string());
        slack -= 1;
    }

    // Materialize.
    let mut tokens: Vec<String> = Vec::with_capacity(dialogue + overhead + 16);
    for sentence in &head {
        tokens.extend(sentence.iter().cloned());
    }
    let mut gold = BTreeMap::new();
    for (t, turn) in turns.iter().enumerate() {
        gold.insert(t, turn.speaker);
        let name = &lexicon.get(turn.speaker).unwrap().name_tokens;
        match turn.pattern {
            Pattern::Pre => {
                tokens.extend(name.iter().cloned());
                tokens.push(VERBS[rng.gen_range(0..VERBS.len())].to_string());
                tokens.push(":".to_string());
                emit_quote(&mut tokens, &turn.content);
            }
            Pattern::Post => {
                emit_quote(&mut tokens, &turn.content);
                tokens.push(VERBS[rng.gen_range(0..VERBS.len())].to_string());
                tokens.extend(name.iter().cloned());
                tokens.push(".".to_string());
            }
            Pattern::Implicit => emit_quote(&mut tokens, &turn.content),
        }
        if let Some(sentences) = inter.get(t) {
            for sentence in sentences {
                tokens.extend(sentence.iter().cloned());
            }
        }
    }
    for sentence in &tail {
        tokens.extend(sentence.iter().cloned());
    }
    (tokens, gold)
}

fn emit_quote(tokens: &mut Vec<String>, content: &[String]) {
    tokens.push("«".to_string());
    tokens.extend(content.iter().cloned());
    tokens.push("»".to_string());
}

fn sample_cast(k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut pool: Vec<u32> = (0..POOL_SIZE as u32).collect();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn plan_turns(
    config: &GenConfig,
    lexicon: &CharacterLexicon,
    cast: &[u32],
    n_turns: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<TurnPlan> {
    let mut turns: Vec<TurnPlan> = Vec::with_capacity(n_turns);
    for t in 0..n_turns {
        let speaker = if t == 0 || rng.gen_bool(0.5) {
            cast[rng.gen_range(0..cast.len())]
        } else {
            turns[t - 1].speaker
        };
        let continuing = t > 0 && speaker == turns[t - 1].speaker;
        let pattern = if continuing && rng.gen_bool(config.implicit_turn_ratio) {
            Pattern::Implicit
        } else if rng.gen_bool(0.5) {
            Pattern::Pre
        } else {
            Pattern::Post
        };
        let len = rng.gen_range(config.min_turn_tokens..=config.max_turn_tokens);
        let content =
            (0..len).map(|_| spoken_word(config, lexicon, speaker, rng)).collect();
        turns.push(TurnPlan { speaker, pattern, content });
    }
    turns
}

fn spoken_word(
    config: &GenConfig,
    lexicon: &CharacterLexicon,
    speaker: u32,
    rng: &mut ChaCha8Rng,
) -> String {
    if rng.gen_bool(config.style_fidelity) {
        let style = &lexicon.get(speaker).unwrap().style_words;
        style[rng.gen_range(0..style.len())].clone()
    } else {
        COMMON_DIALOGUE[rng.gen_range(0..COMMON_DIALOGUE.len())].to_string()
    }
}

fn intro_sentence(
    lexicon: &CharacterLexicon,
    cast: &[u32],
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut out = Vec::new();
    for (i, &id) in cast.iter().enumerate() {
        if i > 0 {
            out.push(if i + 1 == cast.len() { "and".to_string() } else { ",".to_string() });
        }
        out.extend(lexicon.get(id).unwrap().name_tokens.iter().cloned());
    }
    out.push(NARRATION[rng.gen_range(28..NARRATION.len())].to_string()); // a verb
    for _ in 0..2 {
        out.push(NARRATION[rng.gen_range(0..28)].to_string());
    }
    out.push(".".to_string());
    out
}

/// `len` content words plus a final period; never contains a name.
fn narration_sentence(len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out: Vec<String> =
        (0..len).map(|_| NARRATION[rng.gen_range(0..NARRATION.len())].to_string()).collect();
    out.push(".".to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig { stories: 12, seed: 3, ..Default::default() }
    }

    #[test]
    fn constraints_hold_per_story() {
        let corpus = generate(&small()).unwrap();
        for story in &corpus.stories {
            assert!(story.dialogue_turns.len() >= 10, "{}", story.id);
            assert!(story.mentioned_characters().len() >= 5, "{}", story.id);
            let ratio = story.dialogue_token_ratio();
            assert!((0.30..=0.50).contains(&ratio), "{}: ratio {ratio}", story.id);
            let gold = story.gold_speakers.as_ref().unwrap();
            assert_eq!(gold.len(), story.dialogue_turns.len());
        }
    }

    #[test]
    fn turns_stay_outside_protected_zones() {
        let corpus = generate(&small()).unwrap();
        for story in &corpus.stories {
            let len = story.len();
            for span in &story.dialogue_turns {
                assert!(span.start > 50, "{}: turn at {}", story.id, span.start);
                assert!(span.end < len - 30, "{}: turn ends {} of {len}", story.id, span.end);
            }
        }
    }

    #[test]
    fn mentions_never_intersect_turns() {
        let corpus = generate(&small()).unwrap();
        for story in &corpus.stories {
            for m in &story.mentions {
                for i in m.start..m.end {
                    assert!(!story.in_any_turn(i), "{}: mention at {i}", story.id);
                }
            }
        }
    }

    #[test]
    fn same_seed_reproduces_exactly() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        let ser = |c: &GeneratedCorpus| serde_json::to_string(&c.stories).unwrap();
        assert_eq!(ser(&a), ser(&b));
        let c = generate(&GenConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(ser(&a), ser(&c));
    }

    #[test]
    fn style_vocabularies_are_disjoint() {
        let pool = character_pool();
        let mut seen = std::collections::HashSet::new();
        for c in &pool.characters {
            assert_eq!(c.style_words.len(), STYLE_WORDS_PER_CHARACTER);
            for w in &c.style_words {
                assert!(seen.insert(w.clone()), "style word {w} reused");
                assert!(!NARRATION.contains(&w.as_str()));
                assert!(!COMMON_DIALOGUE.contains(&w.as_str()));
            }
        }
    }

    #[test]
    fn gold_speakers_come_from_the_cast() {
        let corpus = generate(&small()).unwrap();
        for story in &corpus.stories {
            let cast = story.mentioned_characters();
            for speaker in story.gold_speakers.as_ref().unwrap().values() {
                assert!(cast.contains(speaker), "{}: speaker {speaker}", story.id);
            }
        }
    }

    #[test]
    fn explicit_mode_attributes_every_turn_correctly() {
        let cfg = GenConfig {
            stories: 8,
            implicit_turn_ratio: 0.0,
            style_fidelity: 1.0,
            seed: 9,
            ..Default::default()
        };
        let corpus = generate(&cfg).unwrap();
        for story in &corpus.stories {
            let attributed = crate::annotate::attribute_speakers(story, &corpus.vocab);
            let gold = story.gold_speakers.as_ref().unwrap();
            for (t, got) in attributed.iter().enumerate() {
                assert_eq!(*got, Some(gold[&t]), "{} turn {t}", story.id);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&GenConfig { characters_per_story: 3, ..small() }).is_err());
        assert!(generate(&GenConfig { ratio_low: 0.1, ..small() }).is_err());
        assert!(generate(&GenConfig { min_turns: 4, ..small() }).is_err());
    }
}
