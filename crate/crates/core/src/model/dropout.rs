use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::tensor::Tensor;

/// Keep probabilities. Dropout is inverted: kept units are scaled by
/// `1 / keep` at training time, so inference uses no masks at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutSpec {
    /// Recurrent connections of every LSTM (one mask per sequence).
    pub recurrent_keep: f64,
    /// LSTM outputs (one mask per sequence).
    pub output_keep: f64,
    /// Input embeddings.
    pub input_keep: f64,
    /// Emission-projection weights.
    pub classifier_keep: f64,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            recurrent_keep: 0.85,
            output_keep: 0.85,
            input_keep: 0.7,
            classifier_keep: 0.85,
        }
    }
}

impl DropoutSpec {
    pub fn none() -> Self {
        Self {
            recurrent_keep: 1.0,
            output_keep: 1.0,
            input_keep: 1.0,
            classifier_keep: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for k in [self.recurrent_keep, self.output_keep, self.input_keep, self.classifier_keep] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::contract("keep probabilities must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Mask sampler for one forward pass in training mode.
pub struct Dropout {
    pub spec: DropoutSpec,
    rng: StreamRng,
}

impl Dropout {
    pub fn new(spec: DropoutSpec, seed: u64) -> Self {
        Self {
            spec,
            rng: rng::stream(seed, "dropout"),
        }
    }

    /// Inverted-dropout mask, or `None` when `keep == 1`.
    pub fn mask(&mut self, shape: &[usize], keep: f64) -> Option<Tensor> {
        if keep >= 1.0 {
            return None;
        }
        let n: usize = shape.iter().product();
        let scale = 1.0 / keep;
        let data: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect();
        Some(Tensor::new(shape.to_vec(), data).expect("shape"))
    }
}
