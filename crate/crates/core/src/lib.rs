//! Selective inference after arbitrary selection procedures.
//!
//! The selection probability is learned from bootstrap replicates of the
//! selection step, then plugged into a grid-supported exponential family for
//! conditional p-values and confidence intervals.

pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod harness;
pub mod inference;
mod linalg;
pub mod mlp;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod training;

pub use error::{Error, Result};
pub use rng::RandomSeed;
