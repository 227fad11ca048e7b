//! Token vocabulary with fixed special-token ids.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::write_atomic;
use crate::Result;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const MASK: u32 = 4;
pub const PROBE: u32 = 5;
pub const SEP: u32 = 6;
pub const OPEN_QUOTE: u32 = 7;
pub const CLOSE_QUOTE: u32 = 8;

pub const SPECIALS: [&str; 9] =
    ["<pad>", "<unk>", "<s>", "</s>", "<mask>", "<probe>", "<sep>", "«", "»"];

/// Sentence-final punctuation used for sentence segmentation.
pub const SENTENCE_FINAL: [&str; 3] = [".", "!", "?"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Specials first (fixed ids), then all distinct corpus tokens in
    /// lexicographic order.
    pub fn from_corpus<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let specials: BTreeSet<&str> = SPECIALS.iter().copied().collect();
        let distinct: BTreeSet<&str> =
            tokens.into_iter().filter(|t| !specials.contains(t)).collect();
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(distinct.into_iter().map(str::to_string));
        Self::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("<unk>", |s| s.as_str())
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<u32> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn decode_text(&self, ids: &[u32]) -> String {
        self.decode(ids).join(" ")
    }

    pub fn sentence_final_ids(&self) -> Vec<u32> {
        SENTENCE_FINAL.iter().map(|t| self.id(t)).filter(|&id| id != UNK).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.tokens)?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tokens: Vec<String> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self::from(tokens))
    }
}

/// Splits raw text into tokens: whitespace-separated, with punctuation peeled
/// off as separate tokens. Generated stories are already in this form.
pub fn tokenize(text: &str) -> Vec<String> {
    const PUNCT: [char; 8] = ['.', ',', ':', ';', '!', '?', '«', '»'];
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut tail = Vec::new();
        loop {
            let mut changed = false;
            if let Some(first) = rest.chars().next() {
                if PUNCT.contains(&first) {
                    out.push(first.to_string());
                    rest = &rest[first.len_utf8()..];
                    changed = true;
                }
            }
            if let Some(last) = rest.chars().last() {
                if PUNCT.contains(&last) {
                    tail.push(last.to_string());
                    rest = &rest[..rest.len() - last.len_utf8()];
                    changed = true;
                }
            }
            if !changed || rest.is_empty() {
                break;
            }
        }
        if !rest.is_empty() {
            out.push(rest.to_string());
        }
        out.extend(tail.into_iter().rev());
    }
    out
}
