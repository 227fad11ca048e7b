use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),

    #[error("training data: {0}")]
    Data(String),

    #[error("non-finite {what} at step {step} (batch: {batch_ids:?})")]
    NonFinite { what: String, step: usize, batch_ids: Vec<String> },

    #[error(transparent)]
    Model(#[from] model::ModelError),

    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}
