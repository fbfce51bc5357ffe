//! Stacked-ensemble meta-learning for binary classification.
//!
//! Base models contribute one probability per sample; a shallow dense network
//! learns to combine them. The crate carries everything around that network:
//!
//! - [`nn`]: dense / ReLU / sigmoid / dropout / batch-norm layers with analytic
//!   gradients and a finite-difference checker
//! - [`optim`]: Adam, reduce-on-plateau, best-loss checkpointing, the epoch loop
//! - [`data`]: registries, stratified splits, prediction tables, a synthetic
//!   generator with a closed-form Bayes combiner
//! - [`metrics`]: confusion counts, accuracy / precision / recall / F1, reports
//! - [`imageprep`]: per-backbone preprocessing and affine augmentation
//! - [`stacker`]: the end-to-end experiment protocol and run persistence

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod imageprep;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod stacker;

pub use error::{Error, Result};
pub use matrix::Matrix;
