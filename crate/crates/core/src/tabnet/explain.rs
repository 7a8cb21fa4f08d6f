use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::model::SourceColumn;

/// Attention masks of a batch and the importances derived from them.
#[derive(Debug, Clone)]
pub struct MaskReport {
    /// One `B × D` mask per decision step, in embedded-column space.
    pub per_step_masks: Vec<Tensor>,
    /// `B × n_steps`; entry `(b, i)` is `Σ_c relu(d_i[b, c])`.
    pub step_weights: Tensor,
    /// `B × D_raw`, one row per instance, each summing to 1.
    pub instance_importance: Tensor,
    /// Mean of the instance rows.
    pub global_importance: Vec<f64>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub feature: String,
    pub importance: f64,
}

impl MaskReport {
    /// Weighs each step's mask by its decision magnitude, folds embedded
    /// columns back onto their source column and normalizes per row. A row
    /// whose steps all carry zero weight falls back to the plain mean of its
    /// masks so that it still sums to 1.
    pub fn build(columns: &[SourceColumn], masks: Vec<Tensor>, decisions: &[&Tensor]) -> Result<Self> {
        if masks.is_empty() || masks.len() != decisions.len() {
            return Err(Error::Contract(format!(
                "{} masks against {} decision outputs",
                masks.len(),
                decisions.len()
            )));
        }
        let rows = masks[0].rows();
        let d_model = masks[0].cols();
        let width: usize = columns.iter().map(|c| c.width).sum();
        if width != d_model || masks.iter().any(|m| m.shape() != [rows, d_model]) {
            return Err(Error::dim("explain", format!("masks do not match {width} embedded columns")));
        }
        let n_steps = masks.len();
        let mut weights = Tensor::zeros(&[rows, n_steps]);
        for (i, d) in decisions.iter().enumerate() {
            if d.rows() != rows {
                return Err(Error::dim("explain", format!("decision {i} has {} rows, masks {rows}", d.rows())));
            }
            for b in 0..rows {
                weights.set(b, i, d.row(b).iter().map(|v| v.max(0.0)).sum());
            }
        }

        let d_raw = columns.len();
        let mut instance = Tensor::zeros(&[rows, d_raw]);
        let mut embedded = vec![0.0; d_model];
        for b in 0..rows {
            let w = weights.row(b);
            let uniform = w.iter().sum::<f64>() <= 0.0;
            embedded.iter_mut().for_each(|v| *v = 0.0);
            for (i, m) in masks.iter().enumerate() {
                let wi = if uniform { 1.0 } else { w[i] };
                for (e, &v) in embedded.iter_mut().zip(m.row(b)) {
                    *e += wi * v;
                }
            }
            let out = instance.row_mut(b);
            for (o, col) in out.iter_mut().zip(columns) {
                *o = embedded[col.start..col.start + col.width].iter().sum();
            }
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|v| *v /= total);
            } else {
                out.iter_mut().for_each(|v| *v = 1.0 / d_raw as f64);
            }
        }

        let mut global = vec![0.0; d_raw];
        for b in 0..rows {
            for (g, v) in global.iter_mut().zip(instance.row(b)) {
                *g += v;
            }
        }
        global.iter_mut().for_each(|g| *g /= rows as f64);

        Ok(Self {
            per_step_masks: masks,
            step_weights: weights,
            instance_importance: instance,
            global_importance: global,
            feature_names: columns.iter().map(|c| c.name.clone()).collect(),
        })
    }

    /// Features ordered by global importance, largest first; ties keep
    /// column order.
    pub fn ranking(&self) -> Vec<RankedFeature> {
        let mut order: Vec<usize> = (0..self.global_importance.len()).collect();
        order.sort_by(|&a, &b| self.global_importance[b].total_cmp(&self.global_importance[a]));
        order
            .into_iter()
            .enumerate()
            .map(|(r, j)| RankedFeature {
                rank: r + 1,
                feature: self.feature_names[j].clone(),
                importance: self.global_importance[j],
            })
            .collect()
    }

    pub fn top_k(&self, k: usize) -> Vec<RankedFeature> {
        let mut r = self.ranking();
        r.truncate(k);
        r
    }
}

/// Ranked importances as a fixed-width text table.
pub struct RankingTable<'a>(pub &'a [RankedFeature]);

impl fmt::Display for RankingTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>4}  {:<32} {:>10}", "rank", "feature", "importance")?;
        for r in self.0 {
            writeln!(f, "{:>4}  {:<32} {:>10.6}", r.rank, r.feature, r.importance)?;
        }
        Ok(())
    }
}
