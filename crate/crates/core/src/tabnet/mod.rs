//! TabNet encoder: embeddings, sequential attention with sparsemax masks,
//! shared and step-specific feature transformers, and mask-based
//! explanations.
//!
//! Internals follow the original TabNet design: the prior
//! update `P ← P ⊙ (γ − M)`, √0.5 residual scaling, `relu(d)` aggregation,
//! the entropy sparsity penalty, ghost batch norm, an input batch norm and a
//! step-0 feature-transformer pass that produces the first attention input.

mod config;
mod explain;
mod layers;
mod model;
mod persist;

pub use config::TabNetConfig;
pub use explain::{MaskReport, RankedFeature, RankingTable};
pub use layers::{
    AttentiveTransformer, BatchNorm, FeatureTransformer, GluBlock, Linear, MaskEntropy, Mode, StatUpdates,
    RESIDUAL_SCALE,
};
pub use model::{update_prior, ForwardOutput, SourceColumn, TabNet, SPARSITY_EPS};
pub use persist::MODEL_MAGIC;
