//! Node clustering for graphs of unknown homophily.
//!
//! The pipeline has three stages:
//!
//! 1. [`reconstruct`] builds a homophilic graph `S` (a row-stochastic graph
//!    learned by a simplex-constrained quadratic program) and a sparse
//!    heterophilic graph `H` (pairs that are far apart in both feature and
//!    topology space).
//! 2. [`filter`] smooths features over `S` with a low-pass operator and
//!    sharpens them over `H` with a high-pass operator, mixing the two.
//! 3. [`dgcn`] trains a dual-encoder network (one encoder on filtered
//!    features, one on the normalized adjacency) with correlation-reduction,
//!    scaled-cosine reconstruction and self-training KL losses.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command-line
//! tool and experiment sweeps live in the companion `dgcn` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset;
pub mod dgcn;
mod error;
pub mod eval;
pub mod filter;
pub mod graph;
pub mod matrix;
pub mod nn;
pub mod reconstruct;
pub mod synth;

pub use dataset::NodeDataset;
pub use error::{Error, Result};
pub use matrix::Matrix;
