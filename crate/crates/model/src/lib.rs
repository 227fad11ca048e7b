//! Encoder-decoder transformer with explicit character representations.
//!
//! Two architectures share one trunk: "character" builds a per-story bank of
//! pooled character vectors, selects one per decoding step by argmax, and
//! fuses it into token prediction; "baseline" ablates all character
//! machinery. Both are driven through the [`StoryModel`] trait and built by
//! name via [`registry`].

pub mod api;
pub mod baseline;
pub mod character;
pub mod config;
pub mod core;
pub mod error;
pub mod instance;
pub mod registry;

pub use api::{
    predict_speakers, DecoderStepTrace, Decoding, GenSettings, GenerationFault, GenerationOutput,
    Mode, StoryModel,
};
pub use config::ModelConfig;
pub use error::ModelError;
pub use instance::{prepare_dialgen, prepare_dialspk, DialGenInstance, DialSpkInstance};
pub use registry::{build_model, load_model, save_model, ARCH_BASELINE, ARCH_CHARACTER};

pub type Result<T> = std::result::Result<T, ModelError>;
