use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no stories to evaluate")]
    Empty,

    #[error("story {story_id}: predicted {predicted} speakers for {gold} probes")]
    LengthMismatch { story_id: String, predicted: usize, gold: usize },

    #[error("story {0}: no probes")]
    NoProbes(String),

    #[error("coherence: {0}")]
    Coherence(String),

    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),

    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}
