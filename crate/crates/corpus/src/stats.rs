//! Corpus-level statistics report.

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::story::{Span, Story};
use crate::vocab::Vocab;
use crate::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusStats {
    pub stories: usize,
    pub avg_tokens: f64,
    pub avg_dialogue_turn_tokens: f64,
    pub avg_sentences: f64,
    pub avg_dialogue_turns: f64,
    pub avg_characters: f64,
}

impl CorpusStats {
    pub fn compute(stories: &[Story], vocab: &Vocab) -> Result<Self> {
        if stories.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let finals = vocab.sentence_final_ids();
        let n = stories.len() as f64;
        let total_tokens: usize = stories.iter().map(Story::len).sum();
        let total_turns: usize = stories.iter().map(|s| s.dialogue_turns.len()).sum();
        let total_turn_tokens: usize = stories
            .iter()
            .flat_map(|s| s.dialogue_turns.iter().map(Span::len))
            .sum();
        let total_sentences: usize = stories
            .iter()
            .map(|s| {
                s.tokens
                    .iter()
                    .enumerate()
                    .filter(|&(i, tok)| finals.contains(tok) && !s.in_any_turn(i))
                    .count()
            })
            .sum();
        let total_characters: usize =
            stories.iter().map(|s| s.mentioned_characters().len()).sum();
        Ok(Self {
            stories: stories.len(),
            avg_tokens: total_tokens as f64 / n,
            avg_dialogue_turn_tokens: if total_turns == 0 {
                0.0
            } else {
                total_turn_tokens as f64 / total_turns as f64
            },
            avg_sentences: total_sentences as f64 / n,
            avg_dialogue_turns: total_turns as f64 / n,
            avg_characters: total_characters as f64 / n,
        })
    }
}

impl std::fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<28} {:>10}", "stories", self.stories)?;
        writeln!(f, "{:<28} {:>10.2}", "avg tokens", self.avg_tokens)?;
        writeln!(f, "{:<28} {:>10.2}", "avg dialogue-turn tokens", self.avg_dialogue_turn_tokens)?;
        writeln!(f, "{:<28} {:>10.2}", "avg sentences", self.avg_sentences)?;
        writeln!(f, "{:<28} {:>10.2}", "avg dialogue turns", self.avg_dialogue_turns)?;
        write!(f, "{:<28} {:>10.2}", "avg characters", self.avg_characters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_is_an_error() {
        let vocab = Vocab::from_corpus(["a"]);
        assert!(matches!(CorpusStats::compute(&[], &vocab), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn averages_match_hand_count() {
        let vocab = Vocab::from_corpus(["a", "."]);
        let dot = vocab.id(".");
        let a = vocab.id("a");
        let story = Story {
            id: "s".into(),
            tokens: vec![a, dot, a, a, dot],
            dialogue_turns: vec![Span::new(2, 4)],
            mentions: vec![],
            gold_speakers: None,
        };
        let stats = CorpusStats::compute(std::slice::from_ref(&story), &vocab).unwrap();
        assert_eq!(stats.stories, 1);
        assert!((stats.avg_tokens - 5.0).abs() < 1e-12);
        assert!((stats.avg_dialogue_turn_tokens - 2.0).abs() < 1e-12);
        assert!((stats.avg_sentences - 2.0).abs() < 1e-12); // the dot at 4 is outside the turn span
        assert!((stats.avg_dialogue_turns - 1.0).abs() < 1e-12);
    }
}
