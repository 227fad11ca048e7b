//! Minimal dense-tensor math with reverse-mode automatic differentiation.
//!
//! Everything is sized for training small transformers on a CPU: tensors are
//! rank-1/rank-2 row-major buffers, the autodiff graph is a dynamic tape that
//! is rebuilt every step, and the only optimizer is Adam with bias correction.
//!
//! Element precision is a compile-time choice through the [`Scalar`] trait:
//! `f32` is the training default, `f64` exists so gradients can be checked
//! against central finite differences with real headroom.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::Checkpoint;
pub use error::NumericsError;
pub use params::{GradMap, Params};
pub use rng::{rng_for, rng_for_indexed, sub_seed, sub_seed_indexed};
pub use scalar::Scalar;
pub use tape::{Tape, ValueId};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Environment variable that forces 64-bit element precision in the CLI.
pub const PRECISION_ENV: &str = "STORYDIAL_PRECISION";

/// Reads the precision mode from the environment: 32 (default) or 64.
pub fn precision_bits_from_env() -> u8 {
    match std::env::var(PRECISION_ENV) {
        Ok(v) if v.trim() == "64" => 64,
        _ => 32,
    }
}
