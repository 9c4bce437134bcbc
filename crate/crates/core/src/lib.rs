//! Deep metric learning engine.
//!
//! A small reverse-mode autodiff graph drives an embedding network trained
//! with contrastive, triplet, reciprocal-triplet and softmax losses over
//! batch-hard mined triplets. The learned space is partitioned by kNN,
//! logistic regression, linear SVMs, an MLP head or a diagonal GMM, scored
//! with confusion-matrix metrics and the Rand index, and visualized with an
//! exact t-SNE.
//!
//! The crate is `no_std` (with `alloc`); file formats and the experiment
//! runner live in the companion `deepmetric` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod embedder;
mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod mining;
pub mod openset;
pub mod partition;
pub mod projection;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
