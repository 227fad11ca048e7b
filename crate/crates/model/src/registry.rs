//! Architecture registry: models are built and restored by name, so callers
//! only ever hold `Box<dyn StoryModel>`.

use numerics::{AdamState, Checkpoint, Params, Scalar};
use serde::{Deserialize, Serialize};

use crate::api::StoryModel;
use crate::baseline::BaselineModel;
use crate::character::CharacterModel;
use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::Result;

pub const ARCH_CHARACTER: &str = "character";
pub const ARCH_BASELINE: &str = "baseline";

pub fn arch_names() -> [&'static str; 2] {
    [ARCH_CHARACTER, ARCH_BASELINE]
}

#[derive(Serialize, Deserialize)]
struct Meta {
    arch: String,
    config: ModelConfig,
}

pub fn build_model<S: Scalar>(
    arch: &str,
    cfg: ModelConfig,
    seed: u64,
) -> Result<Box<dyn StoryModel<S>>> {
    match arch {
        ARCH_CHARACTER => Ok(Box::new(CharacterModel::new(cfg, seed)?)),
        ARCH_BASELINE => Ok(Box::new(BaselineModel::new(cfg, seed)?)),
        other => Err(ModelError::UnknownArch(other.to_string())),
    }
}

/// Packs a model (and optional optimizer state) into a checkpoint.
pub fn save_model<S: Scalar>(
    model: &dyn StoryModel<S>,
    adam: Option<AdamState<S>>,
) -> Result<Checkpoint<S>> {
    let meta = Meta { arch: model.arch_name().to_string(), config: model.config().clone() };
    let meta = serde_json::to_string(&meta).map_err(|e| ModelError::Meta(e.to_string()))?;
    Ok(Checkpoint::new(meta, model.params().clone(), adam))
}

/// Restores a model from a checkpoint, validating the parameter inventory
/// against a fresh build of the recorded architecture.
pub fn load_model<S: Scalar>(
    ck: Checkpoint<S>,
) -> Result<(Box<dyn StoryModel<S>>, Option<AdamState<S>>)> {
    let meta: Meta =
        serde_json::from_str(&ck.meta).map_err(|e| ModelError::Meta(format!("bad meta: {e}")))?;
    let model: Box<dyn StoryModel<S>> = match meta.arch.as_str() {
        ARCH_CHARACTER => Box::new(CharacterModel::from_parts(meta.config, ck.params)?),
        ARCH_BASELINE => Box::new(BaselineModel::from_parts(meta.config, ck.params)?),
        other => return Err(ModelError::UnknownArch(other.to_string())),
    };
    Ok((model, ck.adam))
}

/// Checks a restored parameter set against the expected inventory: same
/// names, same order, same shapes.
pub(crate) fn check_params<S: Scalar>(
    arch: &str,
    expected: &Params<S>,
    got: &Params<S>,
) -> Result<()> {
    if expected.len() != got.len() {
        return Err(ModelError::Meta(format!(
            "{arch}: expected {} parameters, checkpoint has {}",
            expected.len(),
            got.len()
        )));
    }
    for ((en, et), (gn, gt)) in expected.iter().zip(got.iter()) {
        if en != gn {
            return Err(ModelError::Meta(format!(
                "{arch}: parameter order mismatch, expected {en}, got {gn}"
            )));
        }
        if et.shape() != gt.shape() {
            return Err(ModelError::Meta(format!(
                "{arch}: {en} shape {:?} does not match expected {:?}",
                gt.shape(),
                et.shape()
            )));
        }
    }
    Ok(())
}
