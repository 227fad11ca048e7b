//! Training loops for both tasks.
//!
//! One optimizer step per batch: every example in the batch contributes its
//! graph to a single tape, the mean loss is backpropagated once, and Adam
//! sweeps parameters in insertion order. Runs are deterministic for a fixed
//! config, data, and seed, down to the final checkpoint bytes.

pub mod config;
pub mod error;
pub mod metrics;
pub mod trainer;

pub use config::{Task, TrainConfig};
pub use error::TrainError;
pub use metrics::{CoverageReport, MetricsRecord};
pub use trainer::{train_dialgen, train_dialspk, TrainOutcome};

pub type Result<T> = std::result::Result<T, TrainError>;
