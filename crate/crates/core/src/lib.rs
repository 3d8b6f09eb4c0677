//! Multi-task BiLSTM-CRF sequence labeling for opinion role labeling with
//! semantic role labeling as the auxiliary task.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem (corpus files, embeddings, checkpoints, the command line) lives
//! in the `rolemtl` companion crate.
//!
//! Layout:
//!
//! - [`tensor`], [`graph`], [`gradcheck`]: dense `f64` arrays, a define-by-run
//!   reverse-mode tape and a finite-difference checker.
//! - [`corpus`]: sentences, role instances, BIO tags, vocabularies, windowing,
//!   cross-validation plans and padded batches.
//! - [`model`]: input features, the stacked bidirectional LSTM encoder and the
//!   linear-chain CRF.
//! - [`mtl`]: single-task, fully-shared, hierarchical, shared-private and
//!   adversarial shared-private architectures.
//! - [`train`]: Adam, global-norm clipping, task alternation and the
//!   evaluate/select/early-stop loop.
//! - [`metrics`]: binary and proportional span scores, exact-match SRL scores,
//!   the two-sample Kolmogorov-Smirnov test, stability and distance analysis.
//! - [`synth`]: seeded toy corpora with known structure.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod params;
pub mod mtl;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use params::ParamStore;
pub use tensor::Tensor;
