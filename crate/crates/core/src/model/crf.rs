//! Linear-chain CRF: exact log-partition (forward algorithm), marginals
//! (forward-backward), Viterbi decoding and a fused negative log-likelihood
//! node for the tape.
//!
//! Emissions for one sequence are a row-major `[T, Y]` slice. Transition
//! scores are `[Y, Y]` indexed `[from, to]`; `start` and `stop` score the
//! first and last tag.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{log_sum_exp, CustomOp, Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct CrfParams<'a> {
    pub num_tags: usize,
    pub transitions: &'a [f64],
    pub start: &'a [f64],
    pub stop: &'a [f64],
}

impl<'a> CrfParams<'a> {
    pub fn new(transitions: &'a Tensor, start: &'a Tensor, stop: &'a Tensor) -> Result<Self> {
        let (y, y2) = transitions.dims2()?;
        if y != y2 || start.len() != y || stop.len() != y {
            return Err(Error::shape("crf", transitions.shape(), start.shape()));
        }
        Ok(Self {
            num_tags: y,
            transitions: transitions.data(),
            start: start.data(),
            stop: stop.data(),
        })
    }

    #[inline]
    fn trans(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * self.num_tags + to]
    }
}

/// Unnormalized score of one tag path over the first `tags.len()` steps.
pub fn path_score(emissions: &[f64], crf: &CrfParams<'_>, tags: &[usize]) -> f64 {
    let y = crf.num_tags;
    let mut s = crf.start[tags[0]] + crf.stop[tags[tags.len() - 1]];
    for (t, &tag) in tags.iter().enumerate() {
        s += emissions[t * y + tag];
        if t > 0 {
            s += crf.trans(tags[t - 1], tag);
        }
    }
    s
}

/// Forward log-scores `alpha[t][y]` for the first `len` steps.
fn forward(emissions: &[f64], len: usize, crf: &CrfParams<'_>) -> Vec<f64> {
    let y = crf.num_tags;
    let mut alpha = vec![0.0; len * y];
    for j in 0..y {
        alpha[j] = crf.start[j] + emissions[j];
    }
    let mut scratch = vec![0.0; y];
    for t in 1..len {
        for j in 0..y {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha[(t - 1) * y + i] + crf.trans(i, j);
            }
            alpha[t * y + j] = emissions[t * y + j] + log_sum_exp(&scratch);
        }
    }
    alpha
}

/// Backward log-scores `beta[t][y]` (stop score included at `len - 1`).
fn backward(emissions: &[f64], len: usize, crf: &CrfParams<'_>) -> Vec<f64> {
    let y = crf.num_tags;
    let mut beta = vec![0.0; len * y];
    beta[(len - 1) * y..len * y].copy_from_slice(crf.stop);
    let mut scratch = vec![0.0; y];
    for t in (0..len - 1).rev() {
        for i in 0..y {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = crf.trans(i, j) + emissions[(t + 1) * y + j] + beta[(t + 1) * y + j];
            }
            beta[t * y + i] = log_sum_exp(&scratch);
        }
    }
    beta
}

fn final_log_z(alpha: &[f64], len: usize, crf: &CrfParams<'_>) -> f64 {
    let y = crf.num_tags;
    let last: Vec<f64> = (0..y).map(|j| alpha[(len - 1) * y + j] + crf.stop[j]).collect();
    log_sum_exp(&last)
}

/// `log Σ_paths exp(score)` over the first `len` steps.
pub fn log_partition(emissions: &[f64], len: usize, crf: &CrfParams<'_>) -> f64 {
    let alpha = forward(emissions, len, crf);
    final_log_z(&alpha, len, crf)
}

/// Per-position tag marginals `p(y_t = y)`, row-major `[len, Y]`.
pub fn marginals(emissions: &[f64], len: usize, crf: &CrfParams<'_>) -> Vec<f64> {
    let alpha = forward(emissions, len, crf);
    let beta = backward(emissions, len, crf);
    let log_z = final_log_z(&alpha, len, crf);
    alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| libm::exp(a + b - log_z))
        .collect()
}

/// Highest-scoring path over the first `len` steps and its score. Ties go to
/// the lowest tag index, both at each back-pointer and at the final step.
pub fn viterbi(emissions: &[f64], len: usize, crf: &CrfParams<'_>) -> (Vec<usize>, f64) {
    let y = crf.num_tags;
    let mut delta: Vec<f64> = (0..y).map(|j| crf.start[j] + emissions[j]).collect();
    let mut back = vec![0usize; len * y];
    let mut next = vec![0.0; y];
    for t in 1..len {
        for j in 0..y {
            let mut best = 0;
            let mut best_score = delta[0] + crf.trans(0, j);
            for i in 1..y {
                let s = delta[i] + crf.trans(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t * y + j] = best;
            next[j] = best_score + emissions[t * y + j];
        }
        core::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    let mut best_score = delta[0] + crf.stop[0];
    for j in 1..y {
        let s = delta[j] + crf.stop[j];
        if s > best_score {
            last = j;
            best_score = s;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * y + path[t]];
    }
    (path, best_score)
}

/// `log Z − score(gold)` for one sequence with emissions `[T, Y]`.
pub fn crf_nll(emissions: &Tensor, crf: &CrfParams<'_>, gold: &[usize]) -> Result<f64> {
    let (t, y) = emissions.dims2()?;
    if t == 0 {
        return Err(Error::contract("CRF likelihood of an empty sequence"));
    }
    if y != crf.num_tags || gold.len() != t {
        return Err(Error::shape("crf_nll", emissions.shape(), &[gold.len(), crf.num_tags]));
    }
    if let Some(bad) = gold.iter().find(|&&g| g >= y) {
        return Err(Error::Contract(format!("gold tag {bad} out of range for {y} tags")));
    }
    let d = emissions.data();
    Ok(log_partition(d, t, crf) - path_score(d, crf, gold))
}

/// Gathers row `b` of each time-step emission tensor for the first `len`
/// steps into a `[len, Y]` buffer.
fn gather(steps: &[&Tensor], b: usize, len: usize, y: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * y);
    for step in &steps[..len] {
        out.extend_from_slice(&step.data()[b * y..(b + 1) * y]);
    }
    out
}

struct CrfNllOp {
    gold: Vec<Vec<usize>>,
    lengths: Vec<usize>,
    steps: usize,
}

impl CustomOp for CrfNllOp {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (em_steps, rest) = inputs.split_at(self.steps);
        let crf = CrfParams::new(rest[0], rest[1], rest[2]).expect("validated on forward");
        let y = crf.num_tags;
        let batch = self.lengths.len();
        let scale = grad.item() / batch as f64;
        let mut d_em: Vec<Vec<f64>> = em_steps.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut d_trans = vec![0.0; y * y];
        let mut d_start = vec![0.0; y];
        let mut d_stop = vec![0.0; y];
        for (b, (&len, gold)) in self.lengths.iter().zip(&self.gold).enumerate() {
            let em = gather(em_steps, b, len, y);
            let alpha = forward(&em, len, &crf);
            let beta = backward(&em, len, &crf);
            let log_z = final_log_z(&alpha, len, &crf);
            for t in 0..len {
                for j in 0..y {
                    let p = libm::exp(alpha[t * y + j] + beta[t * y + j] - log_z);
                    d_em[t][b * y + j] += scale * p;
                    if t == 0 {
                        d_start[j] += scale * p;
                    }
                    if t == len - 1 {
                        d_stop[j] += scale * p;
                    }
                }
                d_em[t][b * y + gold[t]] -= scale;
                if t > 0 {
                    for i in 0..y {
                        let a = alpha[(t - 1) * y + i];
                        for j in 0..y {
                            let p = libm::exp(a + crf.trans(i, j) + em[t * y + j] + beta[t * y + j] - log_z);
                            d_trans[i * y + j] += scale * p;
                        }
                    }
                    d_trans[gold[t - 1] * y + gold[t]] -= scale;
                }
            }
            d_start[gold[0]] -= scale;
            d_stop[gold[len - 1]] -= scale;
        }
        let mut out: Vec<Option<Tensor>> = d_em
            .into_iter()
            .zip(em_steps)
            .map(|(d, t)| Some(Tensor::new(t.shape().to_vec(), d).expect("shape")))
            .collect();
        out.push(Some(Tensor::new(vec![y, y], d_trans).expect("shape")));
        out.push(Some(Tensor::vector(d_start)));
        out.push(Some(Tensor::vector(d_stop)));
        out
    }
}

/// Mean negative log-likelihood over a batch, as one differentiable node.
///
/// `emissions[t]` is `[B, Y]`; row `b` only uses its first `lengths[b]`
/// steps, so padded steps never contribute.
pub fn crf_nll_graph(
    g: &mut Graph,
    emissions: &[Var],
    transitions: Var,
    start: Var,
    stop: Var,
    gold: &[Vec<usize>],
    lengths: &[usize],
) -> Result<Var> {
    if emissions.is_empty() || lengths.contains(&0) || lengths.is_empty() {
        return Err(Error::contract("CRF likelihood of an empty sequence"));
    }
    let crf = CrfParams::new(g.value(transitions), g.value(start), g.value(stop))?;
    let y = crf.num_tags;
    let steps: Vec<&Tensor> = emissions.iter().map(|v| g.value(*v)).collect();
    let batch = lengths.len();
    for s in &steps {
        if s.shape() != [batch, y] {
            return Err(Error::shape("crf_nll", s.shape(), &[batch, y]));
        }
    }
    let mut total = 0.0;
    for (b, (&len, tags)) in lengths.iter().zip(gold).enumerate() {
        if len > steps.len() || tags.len() < len || tags[..len].iter().any(|&t| t >= y) {
            return Err(Error::Contract(format!("row {b}: bad length or gold tags")));
        }
        let em = gather(&steps, b, len, y);
        total += log_partition(&em, len, &crf) - path_score(&em, &crf, &tags[..len]);
    }
    let value = Tensor::scalar(total / batch as f64);
    let op = CrfNllOp {
        gold: gold.iter().zip(lengths).map(|(t, &l)| t[..l].to_vec()).collect(),
        lengths: lengths.to_vec(),
        steps: emissions.len(),
    };
    let mut inputs = emissions.to_vec();
    inputs.extend([transitions, start, stop]);
    Ok(g.custom(Box::new(op), &inputs, value))
}
