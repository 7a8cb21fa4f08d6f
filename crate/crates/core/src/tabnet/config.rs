use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::BatchNormSpec;

/// Architecture and regularization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabNetConfig {
    /// Width of each step's decision output.
    pub n_d: usize,
    /// Width of the attention features handed to the next step.
    pub n_a: usize,
    pub n_steps: usize,
    /// Feature reuse relaxation; 1 forbids reusing a fully spent feature.
    pub gamma_relax: f64,
    /// Weight of the mask-entropy penalty in the training loss.
    pub lambda_sparse: f64,
    /// Embedding width of every categorical column.
    pub embed_dims: usize,
    /// Ghost batch-norm chunk size; `None` normalizes whole batches.
    pub virtual_batch: Option<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for TabNetConfig {
    fn default() -> Self {
        Self {
            n_d: 16,
            n_a: 16,
            n_steps: 4,
            gamma_relax: 1.3,
            lambda_sparse: 1e-4,
            embed_dims: 1,
            virtual_batch: None,
            bn_momentum: 0.01,
            bn_eps: 1e-5,
            seed: 42,
        }
    }
}

impl TabNetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_d == 0 || self.n_a == 0 || self.n_steps == 0 {
            return fail(format!(
                "n_d, n_a and n_steps must be at least 1 (got {}, {}, {})",
                self.n_d, self.n_a, self.n_steps
            ));
        }
        if !(self.gamma_relax >= 1.0) || !self.gamma_relax.is_finite() {
            return fail(format!("gamma_relax must be at least 1, got {}", self.gamma_relax));
        }
        if !(self.lambda_sparse >= 0.0) || !self.lambda_sparse.is_finite() {
            return fail(format!("lambda_sparse must be non-negative, got {}", self.lambda_sparse));
        }
        if self.embed_dims == 0 {
            return fail("embed_dims must be at least 1".into());
        }
        if self.virtual_batch == Some(0) {
            return fail("virtual_batch must be positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return fail(format!("bn_momentum must lie in (0, 1], got {}", self.bn_momentum));
        }
        if !(self.bn_eps > 0.0) {
            return fail(format!("bn_eps must be positive, got {}", self.bn_eps));
        }
        Ok(())
    }

    pub fn bn_spec(&self) -> BatchNormSpec {
        BatchNormSpec {
            eps: self.bn_eps,
            momentum: self.bn_momentum,
            virtual_batch: self.virtual_batch,
        }
    }

    /// Width of the hidden representation inside the feature transformer.
    pub fn hidden(&self) -> usize {
        self.n_d + self.n_a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TabNetConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            TabNetConfig { n_steps: 0, ..Default::default() },
            TabNetConfig { gamma_relax: 0.9, ..Default::default() },
            TabNetConfig { lambda_sparse: -1.0, ..Default::default() },
            TabNetConfig { virtual_batch: Some(0), ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<TabNetConfig>(r#"{"n_d": 8, "n_q": 3}"#).unwrap_err();
        assert!(err.to_string().contains("n_q"));
    }
}
