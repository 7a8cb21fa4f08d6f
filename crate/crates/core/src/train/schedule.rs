//! Validation-loss monitors. Both count consecutive epochs whose loss fails
//! to beat the best seen so far by at least `min_delta`, and act once that
//! count exceeds their patience.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(min_delta >= 0.0) {
            return Err(Error::Config(format!("min_delta must be non-negative, got {min_delta}")));
        }
        Ok(Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            wait: 0,
        })
    }

    /// Records one epoch's loss; returns true if it counts as an improvement.
    pub fn update(&mut self, loss: f64) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.wait = 0;
            true
        } else {
            self.wait += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.wait > self.patience
    }

    pub fn stale_epochs(&self) -> usize {
        self.wait
    }
}

/// Multiplies the learning rate by `factor` whenever the loss has stagnated
/// for more than `patience` epochs, never going below `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    min_lr: f64,
    min_delta: f64,
    lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64, min_delta: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("scheduler factor must lie in (0, 1), got {factor}")));
        }
        if !(min_lr > 0.0) || !(lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(Self {
            factor,
            patience,
            min_lr,
            min_delta,
            lr: lr.max(min_lr),
            best: f64::INFINITY,
            wait: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's loss and returns the learning rate for the next one.
    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}
