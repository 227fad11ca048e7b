//! Failure classes, one per process exit code.

use thiserror::Error;

/// A command failure with its exit-code class: 1 usage, 2 data, 3 numerical.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration the user can fix before any work runs.
    #[error("{0}")]
    Usage(String),

    /// Inputs that parse but violate a data contract, and I/O failures.
    #[error("{0}")]
    Data(String),

    /// Non-finite losses, gradients, or parameters.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<corpus::CorpusError> for CliError {
    fn from(e: corpus::CorpusError) -> Self {
        match e {
            corpus::CorpusError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<numerics::NumericsError> for CliError {
    fn from(e: numerics::NumericsError) -> Self {
        match e {
            numerics::NumericsError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<model::ModelError> for CliError {
    fn from(e: model::ModelError) -> Self {
        match e {
            model::ModelError::Config(_) | model::ModelError::UnknownArch(_) => {
                CliError::Usage(e.to_string())
            }
            model::ModelError::Numerics(e) => e.into(),
            model::ModelError::Corpus(e) => e.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<train::TrainError> for CliError {
    fn from(e: train::TrainError) -> Self {
        match e {
            train::TrainError::Config(_) => CliError::Usage(e.to_string()),
            train::TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            train::TrainError::Model(e) => e.into(),
            train::TrainError::Numerics(e) => e.into(),
            train::TrainError::Data(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::Numerics(e) => e.into(),
            eval::EvalError::Corpus(e) => e.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::usage("x").exit_code(), 1);
        assert_eq!(CliError::data("x").exit_code(), 2);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
    }

    #[test]
    fn nan_aborts_map_to_the_numerical_class() {
        let e = train::TrainError::NonFinite {
            what: "loss".into(),
            step: 3,
            batch_ids: vec!["s1".into()],
        };
        assert_eq!(CliError::from(e).exit_code(), 3);
    }

    #[test]
    fn config_errors_map_to_the_usage_class() {
        let e = corpus::CorpusError::InvalidConfig("stories must be positive".into());
        assert_eq!(CliError::from(e).exit_code(), 1);
        let e = train::TrainError::Config("epochs must be positive".into());
        assert_eq!(CliError::from(e).exit_code(), 1);
    }
}
