use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::dropout::Dropout;
use super::lstm::{lstm_step_graph, LstmLayerParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

/// Per-layer outputs of a bidirectional stack. `layers[l][t]` is the
/// `[B, 2H]` concatenation of the forward and backward outputs of layer
/// `l` (0-based) at step `t`.
pub struct EncoderOutput {
    pub layers: Vec<Vec<Var>>,
}

impl EncoderOutput {
    pub fn top(&self) -> &[Var] {
        self.layers.last().expect("at least one layer")
    }

    /// Outputs of layer `index`, counted bottom-up from 1.
    pub fn layer(&self, index: usize) -> Result<&[Var]> {
        index
            .checked_sub(1)
            .and_then(|i| self.layers.get(i))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Contract(format!("no encoder layer {index}")))
    }
}

/// Recurrent dropout masks actually applied, per `(layer, direction)` and
/// time step.
#[derive(Default)]
pub struct EncoderTrace {
    pub recurrent_masks: Vec<Vec<Tensor>>,
}

pub fn encoder_param_names(prefix: &str, layers: usize) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..layers {
        for d in DIRECTIONS {
            for w in ["w_x", "w_h", "b"] {
                names.push(format!("{prefix}.{d}.{l}.{w}"));
            }
        }
    }
    names
}

/// Adds a freshly initialized stack under `prefix`. Layer 0 reads
/// `input_dim` features, higher layers read `2·hidden`.
pub fn init_encoder<R: Rng + ?Sized>(
    params: &mut ParamStore,
    prefix: &str,
    input_dim: usize,
    hidden: usize,
    layers: usize,
    rng: &mut R,
) {
    for l in 0..layers {
        let in_dim = if l == 0 { input_dim } else { 2 * hidden };
        for d in DIRECTIONS {
            let p = LstmLayerParams::init(in_dim, hidden, rng);
            params.insert(format!("{prefix}.{d}.{l}.w_x"), p.w_x);
            params.insert(format!("{prefix}.{d}.{l}.w_h"), p.w_h);
            params.insert(format!("{prefix}.{d}.{l}.b"), p.b);
        }
    }
}

/// Runs the stack under `prefix` over time-major `inputs` (`[B, in]` per
/// step). Row `b` is valid for its first `lengths[b]` steps; on padded steps
/// the state is carried through unchanged, so the backward direction of a
/// short row starts from a zero state at its own last token.
///
/// With `dropout`, one recurrent mask and one output mask are drawn per
/// layer and direction and reused at every step.
pub fn encode(
    g: &mut Graph,
    params: &ParamStore,
    prefix: &str,
    layers: usize,
    inputs: &[Var],
    lengths: &[usize],
    mut dropout: Option<&mut Dropout>,
    mut trace: Option<&mut EncoderTrace>,
) -> Result<EncoderOutput> {
    let steps = inputs.len();
    if steps == 0 {
        return Err(Error::contract("encoder needs at least one time step"));
    }
    let batch = lengths.len();
    let hidden = params.expect(&format!("{prefix}.fwd.0.w_h")).shape()[0];

    // keep/carry masks for steps where some row is padding
    let carry: Vec<Option<(Tensor, Tensor)>> = (0..steps)
        .map(|t| {
            if lengths.iter().all(|&l| t < l) {
                return None;
            }
            let mut keep = Tensor::zeros(&[batch, hidden]);
            for (b, &l) in lengths.iter().enumerate() {
                if t < l {
                    keep.data_mut()[b * hidden..(b + 1) * hidden].fill(1.0);
                }
            }
            let hold = keep.map(|k| 1.0 - k);
            Some((keep, hold))
        })
        .collect();

    let mut out = EncoderOutput { layers: Vec::with_capacity(layers) };
    let mut x: Vec<Var> = inputs.to_vec();
    for l in 0..layers {
        let mut per_dir: Vec<Vec<Var>> = Vec::with_capacity(2);
        for d in DIRECTIONS {
            let name = |w: &str| format!("{prefix}.{d}.{l}.{w}");
            let w_x = g.param(&name("w_x"), params.expect(&name("w_x")));
            let w_h = g.param(&name("w_h"), params.expect(&name("w_h")));
            let bias = g.param(&name("b"), params.expect(&name("b")));
            let (rec_mask, out_mask) = match dropout.as_deref_mut() {
                Some(dr) => {
                    let (rk, ok) = (dr.spec.recurrent_keep, dr.spec.output_keep);
                    (dr.mask(&[batch, hidden], rk), dr.mask(&[batch, hidden], ok))
                }
                None => (None, None),
            };
            let zero = g.constant(Tensor::zeros(&[batch, hidden]));
            let (mut h, mut c) = (zero, zero);
            let mut outputs = vec![zero; steps];
            let mut applied = Vec::new();
            let order: Vec<usize> = if d == "fwd" {
                (0..steps).collect()
            } else {
                (0..steps).rev().collect()
            };
            for t in order {
                let h_in = match &rec_mask {
                    Some(m) => {
                        if trace.is_some() {
                            applied.push(m.clone());
                        }
                        g.mask(h, m.clone())?
                    }
                    None => h,
                };
                let (mut hn, mut cn) = lstm_step_graph(g, x[t], h_in, c, w_x, w_h, bias)?;
                if let Some((keep, hold)) = &carry[t] {
                    let a = g.mask(hn, keep.clone())?;
                    let b = g.mask(h, hold.clone())?;
                    hn = g.add(a, b)?;
                    let a = g.mask(cn, keep.clone())?;
                    let b = g.mask(c, hold.clone())?;
                    cn = g.add(a, b)?;
                }
                outputs[t] = match &out_mask {
                    Some(m) => g.mask(hn, m.clone())?,
                    None => hn,
                };
                h = hn;
                c = cn;
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.recurrent_masks.push(applied);
            }
            per_dir.push(outputs);
        }
        let layer: Vec<Var> = (0..steps)
            .map(|t| g.concat(&[per_dir[0][t], per_dir[1][t]]))
            .collect::<Result<_>>()?;
        x = layer.clone();
        out.layers.push(layer);
    }
    Ok(out)
}
