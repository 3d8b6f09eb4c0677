use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{EmbeddingMatrix, PaddedBatch, Span};
use crate::tensor::Tensor;

/// Tokens within two positions of the trigger, clamped to the sentence.
/// Used for the context embedding and the indicator feature.
pub fn context_window(trigger: Span, len: usize) -> Span {
    Span::new(trigger.start.saturating_sub(2), (trigger.end + 2).min(len - 1))
}

fn mean_rows(emb: &EmbeddingMatrix, ids: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; emb.dim()];
    for &i in ids {
        for (a, x) in acc.iter_mut().zip(emb.row(i)) {
            *a += x;
        }
    }
    let n = ids.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Per-token input rows `[token | trigger | context | indicator]` of width
/// `3·dim + 1`.
pub type FeatureRows = Vec<Vec<f64>>;

/// Feature rows for one sentence. The trigger embedding averages the
/// trigger tokens; the context embedding averages the trigger plus two
/// tokens either side.
pub fn assemble_features(token_ids: &[usize], trigger: Span, emb: &EmbeddingMatrix) -> FeatureRows {
    let n = token_ids.len();
    let trig = mean_rows(emb, &token_ids[trigger.start..=trigger.end]);
    let win = context_window(trigger, n);
    let ctx = mean_rows(emb, &token_ids[win.start..=win.end]);
    token_ids
        .iter()
        .enumerate()
        .map(|(t, &id)| {
            let mut row = Vec::with_capacity(3 * emb.dim() + 1);
            row.extend_from_slice(emb.row(id));
            row.extend_from_slice(&trig);
            row.extend_from_slice(&ctx);
            row.push(if win.contains(t) { 1.0 } else { 0.0 });
            row
        })
        .collect()
}

/// Time-major inputs for a batch: entry `t` is `[B, 3·dim + 1]`; padded
/// positions are zero rows. `input_mask`, when given, multiplies the three
/// embedding blocks (the indicator is never dropped) and is drawn per
/// row, position and unit.
pub fn batch_features(
    batch: &PaddedBatch,
    emb: &EmbeddingMatrix,
    mut input_mask: Option<&mut dyn FnMut(usize) -> Vec<f64>>,
) -> Vec<Tensor> {
    let b = batch.size();
    let t_max = batch.max_len();
    let width = 3 * emb.dim() + 1;
    let mut steps: Vec<Vec<f64>> = (0..t_max).map(|_| vec![0.0; b * width]).collect();
    for (row, ids) in batch.token_ids.iter().enumerate() {
        let len = batch.lengths[row];
        let feats = assemble_features(&ids[..len], batch.trigger_spans[row], emb);
        for (t, f) in feats.into_iter().enumerate() {
            let dst = &mut steps[t][row * width..(row + 1) * width];
            dst.copy_from_slice(&f);
            if let Some(sample) = input_mask.as_mut() {
                let m = sample(width - 1);
                for (x, k) in dst.iter_mut().zip(m) {
                    *x *= k;
                }
            }
        }
    }
    steps
        .into_iter()
        .map(|d| Tensor::new(vec![b, width], d).expect("shape"))
        .collect()
}
