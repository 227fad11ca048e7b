//! Story, character lexicon, and span types.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::write_atomic;
use crate::Result;

/// Half-open token span `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index < self.end
    }
}

/// A character name occurrence in narration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub character: u32,
    pub start: usize,
    pub end: usize,
}

/// A story over vocabulary ids. Dialogue-turn spans cover quote contents;
/// the delimiting « » tokens sit immediately outside each span.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub tokens: Vec<u32>,
    pub dialogue_turns: Vec<Span>,
    pub mentions: Vec<Mention>,
    /// Ground-truth speaker per turn index; present for synthetic stories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_speakers: Option<BTreeMap<usize, u32>>,
}

impl Story {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Distinct mentioned characters in order of first mention.
    pub fn mentioned_characters(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        for m in &self.mentions {
            if !seen.contains(&m.character) {
                seen.push(m.character);
            }
        }
        seen
    }

    /// Dialogue tokens (quote contents, delimiters excluded) over total.
    pub fn dialogue_token_ratio(&self) -> f64 {
        if self.tokens.is_empty() {
            return 0.0;
        }
        let dialogue: usize = self.dialogue_turns.iter().map(Span::len).sum();
        dialogue as f64 / self.tokens.len() as f64
    }

    pub fn in_any_turn(&self, index: usize) -> bool {
        self.dialogue_turns.iter().any(|s| s.contains(index))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Character {
    pub id: u32,
    /// Display name; `name_tokens` is its tokenized form.
    pub name: String,
    pub name_tokens: Vec<String>,
    /// Content words this character prefers when speaking (synthetic only).
    #[serde(default)]
    pub style_words: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharacterLexicon {
    pub characters: Vec<Character>,
}

impl CharacterLexicon {
    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Character> {
        self.characters.get(id as usize)
    }

    pub fn name(&self, id: u32) -> &str {
        self.get(id).map_or("?", |c| c.name.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_contains_is_half_open() {
        let s = Span::new(2, 4);
        assert!(!s.contains(1) && s.contains(2) && s.contains(3) && !s.contains(4));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn mentioned_characters_keep_first_mention_order() {
        let story = Story {
            id: "s".into(),
            tokens: vec![0; 10],
            dialogue_turns: vec![],
            mentions: vec![
                Mention { character: 3, start: 0, end: 1 },
                Mention { character: 1, start: 2, end: 3 },
                Mention { character: 3, start: 4, end: 5 },
            ],
            gold_speakers: None,
        };
        assert_eq!(story.mentioned_characters(), [3, 1]);
    }

    #[test]
    fn ratio_counts_contents_only() {
        let story = Story {
            id: "s".into(),
            tokens: vec![0; 10],
            dialogue_turns: vec![Span::new(3, 7)],
            mentions: vec![],
            gold_speakers: None,
        };
        assert!((story.dialogue_token_ratio() - 0.4).abs() < 1e-12);
    }
}
