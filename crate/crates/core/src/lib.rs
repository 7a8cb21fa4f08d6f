// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod losses;
pub mod numerics;
pub mod tabnet;
pub mod train;

pub use error::{Error, Result};

/// Worker threads for batched inference, from `ATTENTAB_THREADS` (default 1).
pub fn threads() -> usize {
    std::env::var("ATTENTAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}
