use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::container;
use crate::data::{EncodedDataset, Split};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::numerics::{Adam, AdamConfig, Graph, Tensor};
use crate::tabnet::{Mode, TabNet};

use super::config::TrainConfig;
use super::metrics::{accuracy, f1_score, F1Average};
use super::schedule::{EarlyStopping, PlateauScheduler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_f1: f64,
    pub val_f1: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss; its parameters are the
    /// ones left in the model.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub early_stopped: bool,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }

    /// History as CSV with a fixed column order.
    pub fn history_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(format!("history CSV: {e}"));
        for rec in &self.history {
            w.serialize(rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Format(format!("history CSV: {e}")))
    }

    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_atomic(path, &self.history_csv()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub f1: f64,
}

fn log_softmax(logits: Tensor) -> Tensor {
    let mut g = Graph::new();
    let x = g.constant(logits);
    let lp = g.log_softmax(x);
    g.value(lp).clone()
}

/// Eval-mode loss, accuracy and F1 over `indices`.
pub fn evaluate(
    model: &TabNet,
    data: &EncodedDataset,
    indices: &[usize],
    loss: &LossSpec,
    average: F1Average,
) -> Result<EvalMetrics> {
    if indices.is_empty() {
        return Err(Error::Config("cannot evaluate an empty index set".into()));
    }
    let (x, y) = data.gather(indices);
    let logits = model.predict_logits(&x, indices.len())?;
    let preds = logits.argmax_rows();
    let value = loss.evaluate(&log_softmax(logits), &y)?;
    Ok(EvalMetrics {
        loss: value.scalar,
        accuracy: accuracy(&preds, &y)?,
        f1: f1_score(&preds, &y, data.n_classes(), average)?,
    })
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Numeric { epoch, detail },
        e => e,
    }
}

fn check_finite(model: &TabNet, epoch: usize) -> Result<()> {
    match model.store().iter().find(|(_, p)| !p.tensor.all_finite()) {
        Some((_, p)) => Err(Error::Numeric {
            epoch,
            detail: format!("parameter `{}` is no longer finite", p.name),
        }),
        None => Ok(()),
    }
}

/// Mini-batch Adam training with validation-loss early stopping and a
/// plateau learning-rate schedule. Leaves the best epoch's parameters (and
/// batch-norm statistics) in `model` and marks it fitted.
pub fn fit(model: &mut TabNet, data: &EncodedDataset, split: &Split, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if split.train_indices.len() < 2 || split.val_indices.is_empty() {
        return Err(Error::Config(format!(
            "split needs at least 2 training rows and 1 validation row, got {} and {}",
            split.train_indices.len(),
            split.val_indices.len()
        )));
    }
    let classes = data.n_classes();
    if model.n_classes() != classes || model.n_raw_features() != data.n_features {
        return Err(Error::Config("model and dataset disagree on features or classes".into()));
    }
    let mut train_counts = vec![0usize; classes];
    split.train_indices.iter().for_each(|&i| train_counts[data.labels[i]] += 1);
    let loss = cfg.loss_spec(&train_counts)?;
    let lambda = model.config().lambda_sparse;

    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..Default::default()
        },
        model.store(),
    )?;
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta)?;
    let mut scheduler = PlateauScheduler::new(cfg.learning_rate, cfg.lr_factor, cfg.patience_lr, cfg.min_lr, cfg.min_delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = split.train_indices.clone();

    check_finite(model, 0)?;
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, crate::numerics::ParamStore)> = None;
    let mut early_stopped = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = adam.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen_preds = Vec::with_capacity(order.len());
        let mut seen_labels = Vec::with_capacity(order.len());
        for batch in order.chunks(cfg.batch_size) {
            // training-mode batch norm needs two rows
            if batch.len() < 2 {
                continue;
            }
            let (x, y) = data.gather(batch);
            let mut g = Graph::new();
            let out = model.forward(&mut g, &x, batch.len(), Mode::Train).map_err(|e| at_epoch(e, epoch))?;
            let lp = g.log_softmax(out.logits);
            let task = loss.record(&mut g, lp, &y)?;
            let total = if lambda > 0.0 {
                let penalty = g.scale(out.sparsity, lambda);
                g.add(task, penalty)?
            } else {
                task
            };
            let value = g.value(total).data()[0];
            if !value.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    detail: format!("training loss is {value}"),
                });
            }
            model.store_mut().zero_grad();
            g.backward_into(total, model.store_mut())?;
            adam.step(model.store_mut())?;
            model.apply_updates(out.updates);
            check_finite(model, epoch)?;

            loss_sum += value * batch.len() as f64;
            seen_preds.extend(g.value(out.logits).argmax_rows());
            seen_labels.extend(y);
        }
        let val = evaluate(model, data, &split.val_indices, &loss, cfg.f1_average).map_err(|e| at_epoch(e, epoch))?;
        if !val.loss.is_finite() {
            return Err(Error::Numeric {
                epoch,
                detail: format!("validation loss is {}", val.loss),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen_labels.len() as f64,
            val_loss: val.loss,
            train_acc: accuracy(&seen_preds, &seen_labels)?,
            val_acc: val.accuracy,
            train_f1: f1_score(&seen_preds, &seen_labels, classes, cfg.f1_average)?,
            val_f1: val.f1,
            lr,
        };
        log::info!(
            "epoch {epoch}: train_loss {:.5} val_loss {:.5} val_acc {:.4} val_f1 {:.4} lr {lr:.3e}",
            record.train_loss,
            record.val_loss,
            record.val_acc,
            record.val_f1
        );
        history.push(record);

        if best.as_ref().is_none_or(|(_, l, _)| val.loss < *l) {
            best = Some((epoch, val.loss, model.store().clone()));
        }
        stopper.update(val.loss);
        adam.set_lr(scheduler.step(val.loss))?;
        if stopper.should_stop() {
            early_stopped = true;
            break;
        }
    }
    let (best_epoch, _, snapshot) = best.expect("at least one epoch ran");
    model.store_mut().load_values_from(&snapshot)?;
    model.mark_fitted();
    Ok(TrainReport {
        stopped_epoch: history.len(),
        history,
        best_epoch,
        early_stopped,
    })
}
