//! Turn extraction, mention detection, and speaker attribution.

use crate::error::CorpusError;
use crate::story::{CharacterLexicon, Mention, Span, Story};
use crate::vocab::{Vocab, CLOSE_QUOTE, OPEN_QUOTE};
use crate::Result;

/// Quote-delimited turn spans (contents only), in document order.
///
/// Quotes must be balanced and non-nested, and every turn non-empty.
pub fn extract_dialogue_turns(tokens: &[u32], story_id: &str) -> Result<Vec<Span>> {
    let mut turns = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &tok) in tokens.iter().enumerate() {
        match tok {
            OPEN_QUOTE => {
                if open.is_some() {
                    return Err(CorpusError::UnbalancedQuotes {
                        story_id: story_id.to_string(),
                        index: i,
                    });
                }
                open = Some(i);
            }
            CLOSE_QUOTE => {
                let Some(start) = open.take() else {
                    return Err(CorpusError::UnbalancedQuotes {
                        story_id: story_id.to_string(),
                        index: i,
                    });
                };
                if i == start + 1 {
                    return Err(CorpusError::Malformed {
                        story_id: story_id.to_string(),
                        reason: format!("empty dialogue turn at index {start}"),
                    });
                }
                turns.push(Span::new(start + 1, i));
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        return Err(CorpusError::UnbalancedQuotes { story_id: story_id.to_string(), index: start });
    }
    Ok(turns)
}

/// Mentions split by region: narration mentions drive attribution and the
/// character bank; quoted ones are kept for inspection only.
#[derive(Debug, Default)]
pub struct MentionScan {
    pub narration: Vec<Mention>,
    pub quoted: Vec<Mention>,
}

/// Greedy longest-match scan of lexicon names over the token stream.
/// Matches never overlap; at each position the longest matching name wins.
pub fn detect_mentions(
    tokens: &[u32],
    turns: &[Span],
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
) -> MentionScan {
    let mut names: Vec<(u32, Vec<u32>)> = lexicon
        .characters
        .iter()
        .map(|c| (c.id, c.name_tokens.iter().map(|t| vocab.id(t)).collect()))
        .collect();
    // Longest first so the first match at a position is the maximal one.
    names.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut scan = MentionScan::default();
    let mut i = 0;
    while i < tokens.len() {
        let hit = names
            .iter()
            .find(|(_, ids)| !ids.is_empty() && tokens[i..].starts_with(ids));
        match hit {
            Some((id, ids)) => {
                let mention = Mention { character: *id, start: i, end: i + ids.len() };
                if (mention.start..mention.end).any(|p| turns.iter().any(|t| t.contains(p))) {
                    scan.quoted.push(mention);
                } else {
                    scan.narration.push(mention);
                }
                i += ids.len();
            }
            None => i += 1,
        }
    }
    scan
}

/// Speaker per turn by the nearest-mention heuristic: the mention in the
/// sentence immediately before the turn wins; failing that, the sentence
/// immediately after; multiple mentions resolve to the one nearest the
/// quote; no mention in either sentence means unattributed.
pub fn attribute_speakers(story: &Story, vocab: &Vocab) -> Vec<Option<u32>> {
    let finals = vocab.sentence_final_ids();
    let boundaries: Vec<usize> = story
        .tokens
        .iter()
        .enumerate()
        .filter(|&(i, tok)| finals.contains(tok) && !story.in_any_turn(i))
        .map(|(i, _)| i)
        .collect();

    let turns = &story.dialogue_turns;
    let mut out = Vec::with_capacity(turns.len());
    for (t, span) in turns.iter().enumerate() {
        let open = span.start - 1;
        let close = span.end;

        // Sentence before the turn: after the last boundary or the previous
        // turn's closing quote, whichever is nearer.
        let mut lo = 0usize;
        if let Some(&b) = boundaries.iter().rev().find(|&&b| b < open) {
            lo = lo.max(b + 1);
        }
        if t > 0 {
            lo = lo.max(turns[t - 1].end + 1);
        }
        let preceding = story
            .mentions
            .iter()
            .filter(|m| m.start >= lo && m.end <= open)
            .max_by_key(|m| m.start);
        if let Some(m) = preceding {
            out.push(Some(m.character));
            continue;
        }

        // Sentence after the turn: up to the first boundary or the next
        // turn's opening quote.
        let mut hi = story.tokens.len();
        if let Some(&b) = boundaries.iter().find(|&&b| b > close) {
            hi = hi.min(b + 1);
        }
        if let Some(next) = turns.get(t + 1) {
            hi = hi.min(next.start - 1);
        }
        let following = story
            .mentions
            .iter()
            .filter(|m| m.start > close && m.end <= hi)
            .min_by_key(|m| m.start);
        out.push(following.map(|m| m.character));
    }
    out
}

/// Full annotation pass over a raw token stream.
pub fn annotate(
    id: &str,
    tokens: Vec<u32>,
    lexicon: &CharacterLexicon,
    vocab: &Vocab,
    gold_speakers: Option<std::collections::BTreeMap<usize, u32>>,
) -> Result<Story> {
    let turns = extract_dialogue_turns(&tokens, id)?;
    let scan = detect_mentions(&tokens, &turns, lexicon, vocab);
    Ok(Story {
        id: id.to_string(),
        tokens,
        dialogue_turns: turns,
        mentions: scan.narration,
        gold_speakers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::story::Character;
    use crate::vocab::tokenize;

    fn fixture(text: &str) -> (Story, Vocab) {
        let lexicon = CharacterLexicon {
            characters: vec![
                Character {
                    id: 0,
                    name: "Alice".into(),
                    name_tokens: vec!["Alice".into()],
                    style_words: vec![],
                },
                Character {
                    id: 1,
                    name: "Bob".into(),
                    name_tokens: vec!["Bob".into()],
                    style_words: vec![],
                },
                Character {
                    id: 2,
                    name: "Old Wu".into(),
                    name_tokens: vec!["Old".into(), "Wu".into()],
                    style_words: vec![],
                },
                Character {
                    id: 3,
                    name: "Wu".into(),
                    name_tokens: vec!["Wu".into()],
                    style_words: vec![],
                },
            ],
        };
        let toks = tokenize(text);
        let vocab = Vocab::from_corpus(toks.iter().map(String::as_str));
        let ids = vocab.encode(toks.iter().map(String::as_str));
        let story = annotate("t", ids, &lexicon, &vocab, None).unwrap();
        (story, vocab)
    }

    #[test]
    fn extracts_content_spans() {
        let (story, vocab) = fixture("Alice said : « go now » and left .");
        assert_eq!(story.dialogue_turns.len(), 1);
        let span = story.dialogue_turns[0];
        assert_eq!(story.tokens[span.start - 1], vocab.id("«"));
        assert_eq!(story.tokens[span.end], vocab.id("»"));
        assert_eq!(vocab.decode(&story.tokens[span.start..span.end]), ["go", "now"]);
    }

    #[test]
    fn rejects_unbalanced_quotes() {
        let toks = ["«", "a", "«", "b", "»"];
        let vocab = Vocab::from_corpus(toks);
        let ids = vocab.encode(toks);
        assert!(matches!(
            extract_dialogue_turns(&ids, "x"),
            Err(CorpusError::UnbalancedQuotes { .. })
        ));
        let ids2 = vocab.encode(["a", "»"]);
        assert!(extract_dialogue_turns(&ids2, "x").is_err());
        let ids3 = vocab.encode(["«", "a"]);
        assert!(extract_dialogue_turns(&ids3, "x").is_err());
    }

    #[test]
    fn longest_match_beats_component_name() {
        let (story, _) = fixture("Old Wu walked while Wu slept .");
        let chars: Vec<u32> = story.mentions.iter().map(|m| m.character).collect();
        assert_eq!(chars, [2, 3]); // "Old Wu" then bare "Wu"
    }

    #[test]
    fn quoted_names_are_not_narration_mentions() {
        let (story, _) = fixture("Alice said : « Bob ran off » . Bob heard .");
        let chars: Vec<u32> = story.mentions.iter().map(|m| m.character).collect();
        assert_eq!(chars, [0, 1]); // Alice before quote, Bob after; quoted Bob excluded
        assert!(story.mentions.iter().all(|m| !story.in_any_turn(m.start)));
    }

    #[test]
    fn pre_turn_pattern_attributes_to_preceding_name() {
        let (story, vocab) = fixture("Alice said : « go now » .");
        assert_eq!(attribute_speakers(&story, &vocab), [Some(0)]);
    }

    #[test]
    fn post_turn_pattern_attributes_to_following_name() {
        let (story, vocab) = fixture("« go now » said Bob .");
        assert_eq!(attribute_speakers(&story, &vocab), [Some(1)]);
    }

    #[test]
    fn implicit_turn_is_unattributed() {
        let (story, vocab) = fixture("Alice said : « one » « two »");
        assert_eq!(attribute_speakers(&story, &vocab), [Some(0), None]);
    }

    #[test]
    fn nearest_mention_wins_with_multiple_candidates() {
        let (story, vocab) = fixture("Alice turned to Bob and said : « hello there »");
        // Both names are in the preceding sentence; Bob is nearer the quote.
        assert_eq!(attribute_speakers(&story, &vocab), [Some(1)]);
    }

    #[test]
    fn sentence_boundary_blocks_earlier_names() {
        let (story, vocab) = fixture("Alice slept . The rain fell : « who goes » said Bob .");
        // Preceding sentence has no name (Alice is cut off by the period),
        // so the following sentence attributes to Bob.
        assert_eq!(attribute_speakers(&story, &vocab), [Some(1)]);
    }

    #[test]
    fn previous_turn_blocks_preceding_scan() {
        let (story, vocab) = fixture("« one » said Alice . « two » said Bob .");
        assert_eq!(attribute_speakers(&story, &vocab), [Some(0), Some(1)]);
    }
}
