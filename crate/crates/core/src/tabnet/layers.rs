use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{BatchNormSpec, BnMode, Graph, NodeId, ParamId, ParamStore, Tensor};

/// Running-statistic values produced by a training-mode pass, to be written
/// back once the step is accepted.
pub type StatUpdates = Vec<(ParamId, Vec<f64>)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        let w = store.add(
            format!("{name}.w"),
            Tensor::new(vec![fan_in, fan_out], data).expect("positive dims"),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]), true);
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.linear(x, w, Some(b))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[width]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[width]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[width], 1.0), false),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        spec: &BatchNormSpec,
        updates: &mut StatUpdates,
    ) -> Result<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let mut mean = store.value(self.running_mean).data().to_vec();
        let mut var = store.value(self.running_var).data().to_vec();
        let bn_mode = match mode {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval,
        };
        let y = g.batch_norm(x, gamma, beta, &mut mean, &mut var, bn_mode, spec)?;
        if mode == Mode::Train {
            updates.push((self.running_mean, mean));
            updates.push((self.running_var, var));
        }
        Ok(y)
    }
}

/// Fully connected layer → batch norm → GLU, halving `2·width` back to
/// `width`.
#[derive(Debug, Clone, Copy)]
pub struct GluBlock {
    pub fc: Linear,
    pub bn: BatchNorm,
}

impl GluBlock {
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        spec: &BatchNormSpec,
        updates: &mut StatUpdates,
    ) -> Result<NodeId> {
        let h = self.fc.forward(g, store, x)?;
        let h = self.bn.forward(g, store, h, mode, spec, updates)?;
        g.glu(h)
    }
}

pub const RESIDUAL_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Four GLU blocks. The first two reuse fully connected weights shared by
/// every step; the last two belong to this step alone. Every block after the
/// first adds its input back and rescales by √0.5.
#[derive(Debug, Clone)]
pub struct FeatureTransformer {
    pub blocks: [GluBlock; 4],
}

impl FeatureTransformer {
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        mode: Mode,
        spec: &BatchNormSpec,
        updates: &mut StatUpdates,
    ) -> Result<NodeId> {
        let mut h = self.blocks[0].forward(g, store, x, mode, spec, updates)?;
        for block in &self.blocks[1..] {
            let out = block.forward(g, store, h, mode, spec, updates)?;
            let sum = g.add(h, out)?;
            h = g.scale(sum, RESIDUAL_SCALE);
        }
        Ok(h)
    }
}

/// Step-specific affine map + batch norm whose output, scaled by the prior,
/// is projected onto the simplex to form the step's feature mask.
#[derive(Debug, Clone, Copy)]
pub struct AttentiveTransformer {
    pub fc: Linear,
    pub bn: BatchNorm,
}

impl AttentiveTransformer {
    /// Returns `(pre-sparsemax logits, mask)`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        a_prev: NodeId,
        prior: NodeId,
        mode: Mode,
        spec: &BatchNormSpec,
        updates: &mut StatUpdates,
    ) -> Result<(NodeId, NodeId)> {
        let h = self.fc.forward(g, store, a_prev)?;
        let h = self.bn.forward(g, store, h, mode, spec, updates)?;
        let scaled = g.mul(h, prior)?;
        let mask = g.sparsemax(scaled)?;
        Ok((scaled, mask))
    }
}

/// Mask-entropy term `Σ_b Σ_j -M log(M + ε) / B`.
pub struct MaskEntropy {
    pub eps: f64,
}

impl MaskEntropy {
    pub fn record(self, g: &mut Graph, mask: NodeId) -> NodeId {
        let m = g.value(mask);
        let rows = m.rows() as f64;
        let total: f64 = m.data().iter().map(|&v| -v * (v + self.eps).ln()).sum();
        g.custom(&[mask], Tensor::scalar(total / rows), Box::new(self))
    }
}

impl crate::numerics::CustomOp for MaskEntropy {
    fn name(&self) -> &'static str {
        "mask_entropy"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &Tensor) -> Vec<Tensor> {
        let m = inputs[0];
        let scale = grad_out.data()[0] / m.rows() as f64;
        vec![m.map(|v| -((v + self.eps).ln() + v / (v + self.eps)) * scale)]
    }
}
