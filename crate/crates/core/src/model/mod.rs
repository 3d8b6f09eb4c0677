//! The single-task labeler: input features, stacked bidirectional LSTM
//! encoder with variational dropout, per-task emission projection and a
//! linear-chain CRF.

pub mod crf;
mod dropout;
mod encoder;
mod features;
pub mod init;
mod lstm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crf::{crf_nll, crf_nll_graph, log_partition, marginals, path_score, viterbi, CrfParams};
pub use dropout::{Dropout, DropoutSpec};
pub use encoder::{encode, encoder_param_names, init_encoder, EncoderOutput, EncoderTrace};
pub use features::{assemble_features, batch_features, context_window, FeatureRows};
pub use lstm::{lstm_step, lstm_step_graph, LstmLayerParams};

/// Widths and depths of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden: usize,
    /// LSTM layers per direction.
    pub layers: usize,
    pub dropout: DropoutSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 100,
            hidden: 100,
            layers: 3,
            dropout: DropoutSpec::default(),
        }
    }
}

impl ModelConfig {
    /// token, trigger and context embeddings plus the indicator bit.
    pub fn input_dim(&self) -> usize {
        3 * self.embedding_dim + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::contract("embedding_dim, hidden and layers must be positive"));
        }
        self.dropout.validate()
    }
}

/// Emission scores `h_t · w + b` for every step.
pub fn project(g: &mut crate::Graph, inputs: &[crate::Var], w: crate::Var, b: crate::Var) -> Result<alloc::vec::Vec<crate::Var>> {
    inputs
        .iter()
        .map(|&h| {
            let z = g.matmul(h, w)?;
            g.add(z, b)
        })
        .collect()
}
