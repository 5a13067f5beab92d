//! Multi-UAV coverage simulation with a hybrid actor-critic and Q-learning
//! resource allocator.
//!
//! Layers, bottom up: [`channel`] (air-to-ground link budget), [`mobility`]
//! (grid random walk with attraction points), [`clustering`] (k-means with
//! silhouette model selection), [`env`] (multi-agent environment), [`learn`]
//! (networks and training) and [`harness`] (configs, baselines, outputs, CLI).

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod clustering;
pub mod env;
pub mod error;
pub mod harness;
pub mod learn;
pub mod mobility;
pub mod rng;

pub use error::{Error, Result};
