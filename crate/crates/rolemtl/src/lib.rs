//! File formats, checkpoints, the experiment driver and the command line
//! around [`rolemtl_core`].
//!
//! - [`formats`]: SRL column files, opinion JSON, text embeddings,
//!   checkpoints, training logs, prediction dumps and report tables.
//! - [`config`]: the JSON run configuration and its overrides.
//! - [`pipeline`]: loading, splitting, windowing, training one run and
//!   scoring it.
//! - [`crossval`]: repeated cross-validation across architectures with
//!   significance tests.
//! - [`cli`]: the `rolemtl` binary.

pub mod cli;
pub mod config;
pub mod crossval;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use rolemtl_core as core;
