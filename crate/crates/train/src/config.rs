use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    DialGen,
    DialSpk,
}

impl Task {
    /// Schedule defaults: infilling converges slower per example but sees
    /// longer targets, speaker recognition wants more epochs.
    pub fn default_epochs(self) -> usize {
        match self {
            Task::DialGen => 10,
            Task::DialSpk => 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Steps per character-selection coverage report.
    pub coverage_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: model::ARCH_CHARACTER.to_string(),
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            seed: 17,
            coverage_window: 1000,
        }
    }
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        Self { epochs: task.default_epochs(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) && self.lr != 0.0 {
            return Err(TrainError::Config(format!("bad learning rate {}", self.lr)));
        }
        if self.coverage_window == 0 {
            return Err(TrainError::Config("coverage_window must be positive".into()));
        }
        Ok(())
    }
}
