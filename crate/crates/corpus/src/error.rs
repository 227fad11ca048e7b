use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),

    #[error("story {story_id}: unbalanced quote tokens at index {index}")]
    UnbalancedQuotes { story_id: String, index: usize },

    #[error("story {story_id}: {reason}")]
    Malformed { story_id: String, reason: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
