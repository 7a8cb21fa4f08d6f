use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::param::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction. Holds one moment pair per parameter of the
/// store it was created for.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let first: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
        Ok(Self {
            config,
            step: 0,
            second: first.clone(),
            first,
        })
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.config.lr = lr;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::Contract("optimizer state does not match parameter store".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).trainable {
                continue;
            }
            let grad = store.grad(id).data().to_vec();
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            let value = store.value_mut(id).data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(grad: &[f64]) -> (ParamStore, crate::numerics::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(vec![grad.len()], vec![1.0; grad.len()]).unwrap(), true);
        s.accumulate_grad(id, &Tensor::new(vec![grad.len()], grad.to_vec()).unwrap());
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = store_with(&[0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig::default(), &s).unwrap();
        adam.step(&mut s).unwrap();
        assert_eq!(s.value(id).data(), &[1.0, 1.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let (mut s, id) = store_with(&[0.3, -4.0]);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut adam = Adam::new(cfg, &s).unwrap();
        adam.step(&mut s).unwrap();
        // m_hat = g, v_hat = g², so the step is lr·g/(|g| + eps)
        let want0 = 1.0 - 0.1 * 0.3 / (0.3 + 1e-8);
        let want1 = 1.0 + 0.1 * 4.0 / (4.0 + 1e-8);
        assert!((s.value(id).data()[0] - want0).abs() < 1e-15);
        assert!((s.value(id).data()[1] - want1).abs() < 1e-15);
    }

    #[test]
    fn non_positive_lr_rejected() {
        let s = ParamStore::new();
        let cfg = AdamConfig { lr: 0.0, ..Default::default() };
        assert!(matches!(Adam::new(cfg, &s), Err(Error::Config(_))));
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let (mut s, id) = store_with(&[0.123, -0.456]);
            let mut adam = Adam::new(AdamConfig::default(), &s).unwrap();
            for _ in 0..10 {
                adam.step(&mut s).unwrap();
            }
            s.value(id).data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
