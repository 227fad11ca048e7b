//! Speaker accuracy: dialogue-level (DAC) and story-level (SAC).

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::Result;

/// One story's speaker predictions next to its gold labels.
#[derive(Clone, Debug)]
pub struct StoryOutcome {
    pub story_id: String,
    pub predicted: Vec<usize>,
    pub gold: Vec<usize>,
}

/// Accuracy with the raw counts kept alongside the ratios.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DacSac {
    pub correct_probes: usize,
    pub total_probes: usize,
    pub fully_correct_stories: usize,
    pub total_stories: usize,
}

impl DacSac {
    /// Fraction of probes answered correctly, pooled over all stories.
    pub fn dac(&self) -> f64 {
        self.correct_probes as f64 / self.total_probes as f64
    }

    /// Fraction of stories with every probe answered correctly.
    pub fn sac(&self) -> f64 {
        self.fully_correct_stories as f64 / self.total_stories as f64
    }
}

pub fn dac_sac(outcomes: &[StoryOutcome]) -> Result<DacSac> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = DacSac {
        correct_probes: 0,
        total_probes: 0,
        fully_correct_stories: 0,
        total_stories: outcomes.len(),
    };
    for story in outcomes {
        if story.predicted.len() != story.gold.len() {
            return Err(EvalError::LengthMismatch {
                story_id: story.story_id.clone(),
                predicted: story.predicted.len(),
                gold: story.gold.len(),
            });
        }
        if story.gold.is_empty() {
            return Err(EvalError::NoProbes(story.story_id.clone()));
        }
        let correct =
            story.predicted.iter().zip(&story.gold).filter(|(p, g)| p == g).count();
        counts.correct_probes += correct;
        counts.total_probes += story.gold.len();
        counts.fully_correct_stories += usize::from(correct == story.gold.len());
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn story(id: &str, predicted: Vec<usize>, gold: Vec<usize>) -> StoryOutcome {
        StoryOutcome { story_id: id.into(), predicted, gold }
    }

    #[test]
    fn two_story_fixture_gives_eighty_and_fifty_percent() {
        // Story A: 2 of 3 correct. Story B: 2 of 2. DAC 4/5, SAC 1/2.
        let outcomes = vec![
            story("a", vec![0, 1, 2], vec![0, 1, 1]),
            story("b", vec![3, 0], vec![3, 0]),
        ];
        let acc = dac_sac(&outcomes).unwrap();
        assert_eq!(acc.correct_probes, 4);
        assert_eq!(acc.total_probes, 5);
        assert_eq!(acc.fully_correct_stories, 1);
        assert_eq!(acc.total_stories, 2);
        assert!((acc.dac() - 0.8).abs() < 1e-12);
        assert!((acc.sac() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sac_never_exceeds_dac() {
        let outcomes = vec![
            story("a", vec![0, 0, 0], vec![0, 1, 0]),
            story("b", vec![1], vec![1]),
            story("c", vec![2, 2], vec![0, 1]),
        ];
        let acc = dac_sac(&outcomes).unwrap();
        assert!(acc.sac() <= acc.dac() + 1e-12);
    }

    #[test]
    fn zero_stories_is_an_error() {
        assert!(matches!(dac_sac(&[]), Err(EvalError::Empty)));
    }

    #[test]
    fn length_mismatch_names_the_story() {
        let outcomes = vec![story("story-7", vec![0, 1], vec![0])];
        match dac_sac(&outcomes) {
            Err(EvalError::LengthMismatch { story_id, predicted, gold }) => {
                assert_eq!(story_id, "story-7");
                assert_eq!((predicted, gold), (2, 1));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn probeless_story_is_an_error() {
        let outcomes = vec![story("empty", vec![], vec![])];
        assert!(matches!(dac_sac(&outcomes), Err(EvalError::NoProbes(_))));
    }
}
