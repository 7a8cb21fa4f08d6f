//! Classification objectives: cross-entropy, class-weighted cross-entropy and
//! the alpha-balanced focal loss, generalized to `C` classes.
//!
//! For an example with true class `y`, `p_t` is the predicted probability of
//! `y` and `alpha_t = alpha[y]`. All three losses are instances of
//!
//! ```text
//! loss = -alpha_t · (1 - p_t)^gamma · log(p_t)
//! ```
//!
//! with `alpha = 1, gamma = 0` for plain cross-entropy and `gamma = 0` for the
//! weighted variant. Inputs are log-probabilities (the output of a
//! log-softmax), and `log(p_t)` is floored at `ln(1e-12)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Graph, NodeId, Tensor};

const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma_focal: f64,
    pub alpha: Vec<f64>,
}

impl FocalParams {
    pub fn new(gamma_focal: f64, alpha: Vec<f64>) -> Result<Self> {
        let p = Self { gamma_focal, alpha };
        p.validate()?;
        Ok(p)
    }

    /// `gamma` with unit class weights.
    pub fn unweighted(gamma_focal: f64, classes: usize) -> Result<Self> {
        Self::new(gamma_focal, vec![1.0; classes])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_focal >= 0.0) || !self.gamma_focal.is_finite() {
            return Err(Error::Config(format!(
                "focal gamma must be a finite non-negative number, got {}",
                self.gamma_focal
            )));
        }
        validate_alpha(&self.alpha)
    }
}

fn validate_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::Config("alpha must have one weight per class".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Config(format!("alpha entries must be positive and finite, got {a}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    /// Mean of `per_example`.
    pub scalar: f64,
    pub per_example: Vec<f64>,
}

impl LossValue {
    fn from_per_example(per_example: Vec<f64>) -> Self {
        let scalar = per_example.iter().sum::<f64>() / per_example.len() as f64;
        Self { scalar, per_example }
    }
}

/// Which objective to train against.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    Balanced { alpha: Vec<f64> },
    Focal(FocalParams),
}

impl LossSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let alpha = match self {
            LossSpec::CrossEntropy => return Ok(()),
            LossSpec::Balanced { alpha } => {
                validate_alpha(alpha)?;
                alpha
            }
            LossSpec::Focal(p) => {
                p.validate()?;
                &p.alpha
            }
        };
        if alpha.len() != classes {
            return Err(Error::Config(format!(
                "alpha has {} entries but there are {classes} classes",
                alpha.len()
            )));
        }
        Ok(())
    }

    fn weights_and_gamma(&self) -> (Option<&[f64]>, f64) {
        match self {
            LossSpec::CrossEntropy => (None, 0.0),
            LossSpec::Balanced { alpha } => (Some(alpha), 0.0),
            LossSpec::Focal(p) => (Some(&p.alpha), p.gamma_focal),
        }
    }

    pub fn evaluate(&self, logprobs: &Tensor, labels: &[usize]) -> Result<LossValue> {
        match self {
            LossSpec::CrossEntropy => ce_loss(logprobs, labels),
            LossSpec::Balanced { alpha } => balanced_ce_loss(logprobs, labels, alpha),
            LossSpec::Focal(p) => focal_loss(logprobs, labels, p),
        }
    }

    /// Records the mean loss of `logprobs` as a differentiable scalar node.
    pub fn record(&self, graph: &mut Graph, logprobs: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lp = graph.value(logprobs);
        let value = self.evaluate(lp, labels)?;
        let (weights, gamma) = self.weights_and_gamma();
        let op = ClassLossOp {
            labels: labels.to_vec(),
            alpha: weights.map(<[f64]>::to_vec),
            gamma,
        };
        Ok(graph.custom(&[logprobs], Tensor::scalar(value.scalar), Box::new(op)))
    }
}

fn check_inputs(logprobs: &Tensor, labels: &[usize], alpha: Option<&[f64]>) -> Result<()> {
    let (rows, classes) = logprobs.dims2();
    if rows != labels.len() {
        return Err(Error::dim(
            "loss",
            format!("{rows} rows of log-probabilities but {} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Label(format!("label {bad} out of range for {classes} classes")));
    }
    if let Some(alpha) = alpha {
        validate_alpha(alpha)?;
        if alpha.len() != classes {
            return Err(Error::Config(format!(
                "alpha has {} entries but there are {classes} classes",
                alpha.len()
            )));
        }
    }
    for r in 0..rows {
        let lse = logprobs.row(r).iter().map(|v| v.exp()).sum::<f64>().ln();
        if !(lse.abs() < 1e-6) {
            return Err(Error::Contract(format!(
                "row {r} is not a log-probability vector (log-sum-exp {lse})"
            )));
        }
    }
    Ok(())
}

fn per_example(logprobs: &Tensor, labels: &[usize], alpha: Option<&[f64]>, gamma: f64) -> Vec<f64> {
    let floor = P_FLOOR.ln();
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let lp = logprobs.get(b, y);
            let a = alpha.map_or(1.0, |a| a[y]);
            let log_pt = lp.max(floor);
            let modulator = if gamma == 0.0 { 1.0 } else { (-lp.exp_m1()).max(0.0).powf(gamma) };
            // -0.0 for a certain prediction
            (-a * modulator * log_pt).max(0.0)
        })
        .collect()
}

/// Gradient of the batch-mean loss with respect to the log-probabilities.
fn mean_loss_grad(logprobs: &Tensor, labels: &[usize], alpha: Option<&[f64]>, gamma: f64) -> Tensor {
    let floor = P_FLOOR.ln();
    let n = labels.len() as f64;
    let mut grad = Tensor::zeros(logprobs.shape());
    for (b, &y) in labels.iter().enumerate() {
        let lp = logprobs.get(b, y);
        let a = alpha.map_or(1.0, |a| a[y]);
        let clamped = lp <= floor;
        let log_pt = lp.max(floor);
        let d = if gamma == 0.0 {
            if clamped {
                0.0
            } else {
                -a
            }
        } else {
            let p = lp.exp();
            let q = (-lp.exp_m1()).max(0.0);
            let direct = if clamped { 0.0 } else { -a * q.powf(gamma) };
            // d/dl of (1 - e^l)^gamma = -gamma · p · (1 - p)^(gamma - 1)
            let through_modulator = if q > 0.0 {
                a * gamma * p * q.powf(gamma - 1.0) * log_pt
            } else {
                0.0
            };
            direct + through_modulator
        };
        grad.set(b, y, d / n);
    }
    grad
}

struct ClassLossOp {
    labels: Vec<usize>,
    alpha: Option<Vec<f64>>,
    gamma: f64,
}

impl CustomOp for ClassLossOp {
    fn name(&self) -> &'static str {
        "class_loss"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &Tensor) -> Vec<Tensor> {
        let g = grad_out.data()[0];
        let grad = mean_loss_grad(inputs[0], &self.labels, self.alpha.as_deref(), self.gamma);
        vec![grad.map(|v| v * g)]
    }
}

/// Categorical cross-entropy: `-log p_t`.
pub fn ce_loss(logprobs: &Tensor, labels: &[usize]) -> Result<LossValue> {
    check_inputs(logprobs, labels, None)?;
    Ok(LossValue::from_per_example(per_example(logprobs, labels, None, 0.0)))
}

/// Class-weighted cross-entropy: `-alpha_t · log p_t`.
pub fn balanced_ce_loss(logprobs: &Tensor, labels: &[usize], alpha: &[f64]) -> Result<LossValue> {
    check_inputs(logprobs, labels, Some(alpha))?;
    Ok(LossValue::from_per_example(per_example(logprobs, labels, Some(alpha), 0.0)))
}

/// Alpha-balanced focal loss: `-alpha_t · (1 - p_t)^gamma · log p_t`.
pub fn focal_loss(logprobs: &Tensor, labels: &[usize], params: &FocalParams) -> Result<LossValue> {
    params.validate()?;
    check_inputs(logprobs, labels, Some(&params.alpha))?;
    Ok(LossValue::from_per_example(per_example(
        logprobs,
        labels,
        Some(&params.alpha),
        params.gamma_focal,
    )))
}

/// Inverse-frequency class weights `N / (C · count[c])`; their
/// count-weighted mean is one.
pub fn alpha_from_frequencies(class_counts: &[usize]) -> Result<Vec<f64>> {
    if class_counts.is_empty() {
        return Err(Error::Config("no classes to weight".into()));
    }
    if let Some(class) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass { class });
    }
    let total: usize = class_counts.iter().sum();
    let classes = class_counts.len() as f64;
    Ok(class_counts
        .iter()
        .map(|&c| total as f64 / (classes * c as f64))
        .collect())
}
