use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
    /// `n_a·n_b / (n_a + n_b)`.
    pub effective_n: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let y = libm::exp(-PI * PI / (8.0 * lambda * lambda));
        let mut cdf = 0.0;
        for k in (1..=9).step_by(2) {
            cdf += libm::pow(y, (k * k) as f64);
        }
        1.0 - libm::sqrt(2.0 * PI) / lambda * cdf
    } else {
        let x = libm::exp(-2.0 * lambda * lambda);
        let mut s = 0.0;
        for j in 1..=20u32 {
            let term = libm::pow(x, (j * j) as f64);
            s += if j % 2 == 1 { term } else { -term };
        }
        2.0 * s
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("KS test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Numeric("KS sample".into()));
    }
    let sorted = |s: &[f64]| {
        let mut v: Vec<f64> = s.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    // sup over x of |i/na - j/nb|, tracked as |i·nb - j·na| to stay exact
    let (mut i, mut j, mut best) = (0usize, 0usize, 0u128);
    while i < na && j < nb {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        let gap = (i as u128 * nb as u128).abs_diff(j as u128 * na as u128);
        best = best.max(gap);
    }
    let d = best as f64 / (na as f64 * nb as f64);
    let effective_n = (na * nb) as f64 / (na + nb) as f64;
    Ok(KsResult {
        d,
        p_value: kolmogorov_survival(libm::sqrt(effective_n) * d),
        effective_n,
    })
}
