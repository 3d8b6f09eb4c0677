//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each operation appends a
//! node holding its value; [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients (`+=` across fan-out). Inputs always precede their
//! consumers on the tape, so the graph is acyclic by construction.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written vector-Jacobian product.
///
/// Used for fused kernels (the CRF likelihood) whose backward pass is cheaper
/// to write directly than to compose from primitive nodes.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Gradients with respect to each input, given the upstream gradient of
    /// the output. `None` means the input receives nothing.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Constant,
    Variable,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxLast(Var),
    LogSumExpLast(Var),
    SumLast(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize, len: usize },
    Mask(Var, Tensor),
    Sum(Var),
    Mean(Var),
    Reverse(Var, f64),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Variable => "variable",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::SoftmaxLast(_) => "softmax_lastdim",
            Op::LogSumExpLast(_) => "log_sum_exp_lastdim",
            Op::SumLast(_) => "sum_lastdim",
            Op::Concat(_) => "concat_lastdim",
            Op::Slice { .. } => "slice_lastdim",
            Op::Mask(..) => "pointwise_mask",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Reverse(..) => "gradient_reversal",
            Op::Custom(op, _) => op.name(),
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Variable | Op::Param => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxLast(a)
            | Op::LogSumExpLast(a)
            | Op::SumLast(a)
            | Op::Mask(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reverse(a, _) => vec![*a],
            Op::Slice { x, .. } => vec![*x],
            Op::Concat(xs) | Op::Custom(_, xs) => xs.clone(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v` (zeros when `v` is not on a
    /// path to the loss).
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    pub fn param(&self, name: &str) -> Option<Tensor> {
        self.params.get(name).map(|v| self.wrt(*v))
    }

    /// Gradients of every parameter registered on the graph, by name.
    pub fn named(mut self) -> BTreeMap<String, Tensor> {
        let params = core::mem::take(&mut self.params);
        params
            .into_iter()
            .map(|(name, v)| {
                let g = self.grads[v.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]));
                (name, g)
            })
            .collect()
    }

    /// Like [`Gradients::named`] but only for parameters on a path to the
    /// loss.
    pub fn reached(mut self) -> BTreeMap<String, Tensor> {
        let params = core::mem::take(&mut self.params);
        params
            .into_iter()
            .filter_map(|(name, v)| self.grads[v.0].take().map(|g| (name, g)))
            .collect()
    }
}

/// Checks whether `rhs` can be broadcast onto `lhs`: equal shapes, a trailing
/// suffix of `lhs` (e.g. a bias row), or a single element.
fn broadcast_ok(lhs: &[usize], rhs: &[usize], rhs_len: usize) -> bool {
    rhs_len == 1 || (rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs)
}

fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for chunk in g.chunks(len) {
        for (o, x) in out.iter_mut().zip(chunk) {
            *o += x;
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], delta: &[f64]) {
    match slot {
        Some(t) => {
            for (a, d) in t.data_mut().iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => {
            *slot = Some(Tensor::new(shape.to_vec(), delta.to_vec()).expect("gradient shape"));
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Variable | Op::Param => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t)
    }

    /// An unnamed differentiable leaf.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Op::Variable, t)
    }

    /// A named differentiable leaf. Registering the same name twice returns
    /// the first node, so a weight reused across time steps accumulates into
    /// one gradient.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(v) = self.params.get(name) {
            return *v;
        }
        let v = self.push(Op::Param, t.clone());
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcast_ok(ta.shape(), tb.shape(), tb.len()) {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let rb = tb.data();
        let n = rb.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, rb[i % n]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::tanh);
        self.push(Op::Tanh(a), value)
    }

    /// Softmax over the last dimension, max-shifted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.last_dim();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - m);
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(Op::SoftmaxLast(a), value)
    }

    /// `log Σ exp` over the last dimension, max-shifted. The last dimension
    /// is removed from the shape.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.last_dim();
        let data = t.data().chunks(n).map(log_sum_exp).collect();
        let shape = t.shape()[..t.shape().len().saturating_sub(1)].to_vec();
        let value = Tensor::new(shape, data).expect("reduced shape");
        self.push(Op::LogSumExpLast(a), value)
    }

    /// Sum over the last dimension, which is removed from the shape.
    pub fn sum_last(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.last_dim();
        let data = t.data().chunks(n).map(|r| r.iter().sum()).collect();
        let shape = t.shape()[..t.shape().len().saturating_sub(1)].to_vec();
        let value = Tensor::new(shape, data).expect("reduced shape");
        self.push(Op::SumLast(a), value)
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let lead = self.value(*first).shape();
        let lead = lead[..lead.len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(xs.len());
        for x in xs {
            let s = self.value(*x).shape();
            if s.is_empty() || s[..s.len() - 1] != *lead {
                return Err(Error::shape("concat_lastdim", self.value(*first).shape(), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (x, w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*x).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::Concat(xs.to_vec()), value))
    }

    /// Columns `start..start + len` of the last dimension.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let n = t.last_dim();
        if t.shape().is_empty() || start + len > n {
            return Err(Error::shape("slice_lastdim", t.shape(), &[start, start + len]));
        }
        let data = t
            .data()
            .chunks(n)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().expect("non-scalar") = len;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(Op::Slice { x, start, len }, value))
    }

    /// Elementwise product with a fixed, non-differentiable tensor of the
    /// same shape (dropout masks, padding masks, pooling weights).
    pub fn mask(&mut self, x: Var, mask: Tensor) -> Result<Var> {
        let t = self.value(x);
        if t.shape() != mask.shape() {
            return Err(Error::shape("pointwise_mask", t.shape(), mask.shape()));
        }
        let data = t.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(Op::Mask(x, mask), value))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(Op::Mean(x), value)
    }

    /// Identity on the forward pass; the backward pass multiplies the
    /// incoming gradient by `-scale`.
    pub fn gradient_reversal(&mut self, x: Var, scale: f64) -> Result<Var> {
        if !(scale > 0.0) {
            return Err(Error::Contract(format!("reversal scale must be > 0, got {scale}")));
        }
        let value = self.value(x).clone();
        Ok(self.push(Op::Reverse(x, scale), value))
    }

    /// Appends a fused operation whose forward value was computed by the
    /// caller.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], value: Tensor) -> Var {
        self.push(Op::Custom(op, inputs.to_vec()), value)
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut send = |v: Var, delta: &[f64]| {
            if self.nodes[v.0].needs_grad {
                accumulate(&mut grads[v.0], self.nodes[v.0].value.shape(), delta);
            }
        };
        match &node.op {
            Op::Constant | Op::Variable | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, gd, false, tb.data(), true, &mut da, 0.0);
                    send(*a, &da);
                }
                if wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, gd, false, &mut db, 0.0);
                    send(*b, &db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                send(*a, gd);
                if wants(*b) {
                    let mut db = reduce_to(gd, val(*b).len());
                    if sign < 0.0 {
                        db.iter_mut().for_each(|x| *x = -*x);
                    }
                    send(*b, &db);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let n = tb.len();
                if wants(*a) {
                    let da: Vec<f64> = gd.iter().enumerate().map(|(i, g)| g * tb.data()[i % n]).collect();
                    send(*a, &da);
                }
                if wants(*b) {
                    let prod: Vec<f64> = gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    send(*b, &reduce_to(&prod, n));
                }
            }
            Op::Scale(a, s) => {
                let d: Vec<f64> = gd.iter().map(|g| g * s).collect();
                send(*a, &d);
            }
            Op::Sigmoid(a) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                send(*a, &d);
            }
            Op::Tanh(a) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                send(*a, &d);
            }
            Op::SoftmaxLast(a) => {
                let n = node.value.last_dim();
                let mut d = Vec::with_capacity(gd.len());
                for (gr, yr) in gd.chunks(n).zip(node.value.data().chunks(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    d.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
                }
                send(*a, &d);
            }
            Op::LogSumExpLast(a) => {
                let x = val(*a);
                let n = x.last_dim();
                let mut d = Vec::with_capacity(x.len());
                for ((xr, out), g) in x.data().chunks(n).zip(node.value.data()).zip(gd) {
                    d.extend(xr.iter().map(|xi| g * libm::exp(xi - out)));
                }
                send(*a, &d);
            }
            Op::SumLast(a) => {
                let n = val(*a).last_dim();
                let d: Vec<f64> = gd.iter().flat_map(|g| core::iter::repeat(*g).take(n)).collect();
                send(*a, &d);
            }
            Op::Concat(xs) => {
                let total = node.value.last_dim();
                let rows = node.value.len() / total.max(1);
                let mut offset = 0;
                for x in xs {
                    let w = val(*x).last_dim();
                    if wants(*x) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                        }
                        send(*x, &d);
                    }
                    offset += w;
                }
            }
            Op::Slice { x, start, len } => {
                let n = val(*x).last_dim();
                let mut d = vec![0.0; val(*x).len()];
                for (r, gr) in gd.chunks(*len).enumerate() {
                    d[r * n + start..r * n + start + len].copy_from_slice(gr);
                }
                send(*x, &d);
            }
            Op::Mask(x, m) => {
                let d: Vec<f64> = gd.iter().zip(m.data()).map(|(g, m)| g * m).collect();
                send(*x, &d);
            }
            Op::Sum(x) => {
                let d = vec![gd[0]; val(*x).len()];
                send(*x, &d);
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let d = vec![gd[0] / n as f64; n];
                send(*x, &d);
            }
            Op::Reverse(x, s) => {
                let d: Vec<f64> = gd.iter().map(|g| -s * g).collect();
                send(*x, &d);
            }
            Op::Custom(op, xs) => {
                let inputs: Vec<&Tensor> = xs.iter().map(|v| val(*v)).collect();
                let out = op.backward(&inputs, &node.value, g);
                for (x, d) in xs.iter().zip(out) {
                    if let Some(d) = d {
                        send(*x, d.data());
                    }
                }
            }
        }
    }
}

/// Max-shifted `log Σ exp`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(xs.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}
