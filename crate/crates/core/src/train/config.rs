use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{alpha_from_frequencies, FocalParams, LossSpec};

use super::metrics::F1Average;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Cce,
    Balanced,
    Focal,
}

/// Source of the per-class weights used by the balanced and focal losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `N / (C · count_c)` from the training partition.
    #[default]
    Auto,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stagnant epochs tolerated before stopping.
    pub patience: usize,
    /// Smallest validation-loss decrease that counts as improvement.
    pub min_delta: f64,
    pub lr_factor: f64,
    pub patience_lr: usize,
    pub min_lr: f64,
    pub loss: LossKind,
    pub gamma_focal: f64,
    pub alpha: AlphaMode,
    /// Seed for mini-batch shuffling.
    pub seed: u64,
    pub f1_average: F1Average,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 120,
            batch_size: 1024,
            learning_rate: 0.02,
            patience: 15,
            min_delta: 1e-4,
            lr_factor: 0.5,
            patience_lr: 5,
            min_lr: 1e-4,
            loss: LossKind::Cce,
            gamma_focal: 2.0,
            alpha: AlphaMode::Auto,
            seed: 42,
            f1_average: F1Average::Macro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return fail(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return fail(format!("lr_factor must lie in (0, 1), got {}", self.lr_factor));
        }
        if !(self.min_lr > 0.0) {
            return fail(format!("min_lr must be positive, got {}", self.min_lr));
        }
        if !(self.gamma_focal >= 0.0) || !self.gamma_focal.is_finite() {
            return fail(format!("gamma_focal must be non-negative, got {}", self.gamma_focal));
        }
        Ok(())
    }

    /// Builds the objective, deriving class weights from `train_counts` when
    /// `alpha` is `Auto`.
    pub fn loss_spec(&self, train_counts: &[usize]) -> Result<LossSpec> {
        let alpha = || match self.alpha {
            AlphaMode::Auto => alpha_from_frequencies(train_counts),
            AlphaMode::Uniform => Ok(vec![1.0; train_counts.len()]),
        };
        let spec = match self.loss {
            LossKind::Cce => LossSpec::CrossEntropy,
            LossKind::Balanced => LossSpec::Balanced { alpha: alpha()? },
            LossKind::Focal => LossSpec::Focal(FocalParams::new(self.gamma_focal, alpha()?)?),
        };
        spec.validate(train_counts.len())?;
        Ok(spec)
    }
}
