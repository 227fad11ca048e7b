use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("input length {len} exceeds max sequence length {max}")]
    Overlength { len: usize, max: usize },

    #[error("character {index} has no mention positions")]
    EmptyMentions { index: usize },

    #[error("character bank is empty")]
    EmptyBank,

    #[error("probe count {probes} does not match gold count {golds}")]
    ProbeMismatch { probes: usize, golds: usize },

    #[error("empty gold output")]
    EmptyGold,

    #[error("gold index {index} out of range for {candidates} candidates")]
    GoldOutOfRange { index: usize, candidates: usize },

    #[error("unknown architecture {0:?}")]
    UnknownArch(String),

    #[error("checkpoint meta: {0}")]
    Meta(String),

    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),

    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}
