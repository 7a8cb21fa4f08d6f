//! Training loop, validation monitors and classification metrics.

mod config;
mod fit;
mod metrics;
mod schedule;

pub use config::{AlphaMode, LossKind, TrainConfig};
pub use fit::{evaluate, fit, EpochRecord, EvalMetrics, TrainReport};
pub use metrics::{accuracy, f1_score, macro_f1, per_class_f1, recall, F1Average};
pub use schedule::{EarlyStopping, PlateauScheduler};
