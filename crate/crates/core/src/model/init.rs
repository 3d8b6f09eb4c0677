//! Weight initializers.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng::standard_normal;
use crate::tensor::Tensor;

/// A `[rows, cols]` matrix with orthonormal columns (`rows >= cols`) or
/// orthonormal rows (`rows < cols`), from the QR factorization of a Gaussian
/// matrix. Modified Gram-Schmidt with one re-orthogonalization pass gives
/// `R` a positive diagonal, which fixes the sign ambiguity.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    if rows < cols {
        return orthogonal(cols, rows, rng).transpose().expect("matrix");
    }
    // columns stored contiguously
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| standard_normal(rng)).collect())
        .collect();
    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let d: f64 = done[i].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, qi) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= d * qi;
                }
            }
        }
        let norm = libm::sqrt(q[j].iter().map(|x| x * x).sum::<f64>());
        q[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut data = vec![0.0; rows * cols];
    for (j, col) in q.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * cols + j] = *v;
        }
    }
    Tensor::new(vec![rows, cols], data).expect("shape")
}

/// He (Kaiming) normal: `N(0, 2 / fan_in)` where `fan_in = shape[0]`.
pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let fan_in = shape.first().copied().unwrap_or(1).max(1);
    let std = libm::sqrt(2.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| std * standard_normal(rng)).collect()).expect("shape")
}

/// Horizontal concatenation of equally tall matrices.
pub fn hcat(blocks: &[Tensor]) -> Tensor {
    let rows = blocks[0].shape()[0];
    let widths: Vec<usize> = blocks.iter().map(|b| b.shape()[1]).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for b in blocks {
            data.extend_from_slice(b.row(r));
        }
    }
    Tensor::new(vec![rows, total], data).expect("shape")
}
