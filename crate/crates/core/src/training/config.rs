use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Every class weighted 1.
    Uniform,
    /// Inverse training-fold frequency, normalised to mean 1.
    InverseFrequency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mask_ratio: f64,
    /// Weight of the slide loss; the instance loss gets `1 - lambda`.
    pub lambda: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub accumulation: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub reduction: Reduction,
    pub class_weights: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.5,
            lambda: 0.5,
            learning_rate: 2e-4,
            weight_decay: 1e-5,
            accumulation: 8,
            patience: 20,
            max_epochs: 200,
            seed: 0,
            reduction: Reduction::Mean,
            class_weights: ClassWeighting::InverseFrequency,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!("mask ratio {} outside [0, 1)", self.mask_ratio)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "learning rate must be positive and weight decay non-negative".into(),
            ));
        }
        if self.accumulation == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "accumulation steps and max epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
