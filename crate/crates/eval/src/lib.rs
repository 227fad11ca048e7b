//! Evaluation: overlap and diversity metrics, speaker-accuracy accounting,
//! and a trainable coherence probe for generated dialogue.

pub mod bleu;
pub mod coherence;
pub mod dac_sac;
pub mod distinct;
pub mod error;
pub mod report;

pub use bleu::{bleu, bleu_corpus};
pub use coherence::{shuffle_dialogue, CoherenceConfig, CoherenceModel};
pub use dac_sac::{dac_sac, DacSac, StoryOutcome};
pub use distinct::{distinct_n, Distinct};
pub use error::EvalError;
pub use report::MetricReport;

pub type Result<T> = std::result::Result<T, EvalError>;
