use alloc::vec::Vec;

use rand::Rng;

use super::init::{hcat, orthogonal};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// One LSTM direction of one layer. Gate blocks are laid out `(i, f, g, o)`
/// along the `4H` axis.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

impl LstmLayerParams {
    /// Orthogonal gate blocks, forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let wx: Vec<Tensor> = (0..4).map(|_| orthogonal(input_dim, hidden, rng)).collect();
        let wh: Vec<Tensor> = (0..4).map(|_| orthogonal(hidden, hidden, rng)).collect();
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        Self {
            w_x: hcat(&wx),
            w_h: hcat(&wh),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[0]
    }
}

/// Records one step on the graph and returns `(h, c)`.
///
/// `x` is `[B, in]`, `h_prev` and `c_prev` are `[B, H]`.
pub fn lstm_step_graph(
    g: &mut Graph,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w_x: Var,
    w_h: Var,
    b: Var,
) -> Result<(Var, Var)> {
    let hidden = g.value(w_h).shape()[0];
    let zx = g.matmul(x, w_x)?;
    let zh = g.matmul(h_prev, w_h)?;
    let z = g.add(zx, zh)?;
    let z = g.add(z, b)?;
    let zi = g.slice_last(z, 0, hidden)?;
    let zf = g.slice_last(z, hidden, hidden)?;
    let zg = g.slice_last(z, 2 * hidden, hidden)?;
    let zo = g.slice_last(z, 3 * hidden, hidden)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Evaluates one step outside of any training graph.
pub fn lstm_step(params: &LstmLayerParams, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let (x, h0, c0) = (g.constant(x.clone()), g.constant(h_prev.clone()), g.constant(c_prev.clone()));
    let (wx, wh, b) = (
        g.constant(params.w_x.clone()),
        g.constant(params.w_h.clone()),
        g.constant(params.b.clone()),
    );
    let (h, c) = lstm_step_graph(&mut g, x, h0, c0, wx, wh, b)?;
    Ok((g.value(h).clone(), g.value(c).clone()))
}
