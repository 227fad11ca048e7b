//! Story corpus: synthetic generation, dialogue annotation, task datasets.
//!
//! The pipeline is generate → annotate → build. Generation produces stories
//! with known speakers for every dialogue turn; annotation recovers turn
//! spans, character mentions, and speakers from the token stream alone; the
//! builders turn annotated stories into infilling and speaker-recognition
//! examples. Everything is deterministic given a seed.

pub mod annotate;
pub mod dataset;
pub mod error;
pub mod generate;
pub mod io;
pub mod stats;
pub mod story;
pub mod vocab;

pub use dataset::{DialGenExample, DialSpkExample};
pub use error::CorpusError;
pub use generate::GenConfig;
pub use stats::CorpusStats;
pub use story::{Character, CharacterLexicon, Mention, Span, Story};
pub use vocab::Vocab;

pub type Result<T> = std::result::Result<T, CorpusError>;
