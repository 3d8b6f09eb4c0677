//! Central finite-difference verification of [`Graph::backward`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub epsilon: f64,
    pub entries_checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Parameters with more entries than this are checked on a seeded
    /// random subset of this size.
    pub max_entries_per_param: usize,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_entries_per_param: 4096,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward-pass gradients of `loss_fn` with central differences for
/// every entry of every parameter in `params`.
///
/// `loss_fn` must register parameters through [`Graph::param`] and return a
/// scalar; it is called `1 + 2·entries` times and must be deterministic.
pub fn grad_check<F>(loss_fn: F, params: &ParamStore, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eps = opts.epsilon;
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Contract(format!("epsilon must lie in (0, 1e-3], got {eps}")));
    }
    for (name, t) in params.iter() {
        t.check_finite(name)?;
    }
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, params)?;
    g.value(loss).check_finite("loss")?;
    let analytic = g.backward(loss)?.named();

    let eval = |p: &ParamStore, name: &str| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(&mut g, p)?;
        let v = g.value(l).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(String::from(name)))
        }
    };

    let mut perturbed = params.clone();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in &names {
        let grad = analytic.get(name.as_str()).cloned().unwrap_or_else(|| {
            crate::tensor::Tensor::zeros(params.expect(name).shape())
        });
        grad.check_finite(name)?;
        let n = grad.len();
        let idx: Vec<usize> = if n > opts.max_entries_per_param {
            let mut r = rng::stream(opts.seed, name);
            let mut v = sample(&mut r, n, opts.max_entries_per_param).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..n).collect()
        };
        for i in idx {
            let orig = params.expect(name).data()[i];
            perturbed.get_mut(name).expect("present").data_mut()[i] = orig + eps;
            let up = eval(&perturbed, name)?;
            perturbed.get_mut(name).expect("present").data_mut()[i] = orig - eps;
            let down = eval(&perturbed, name)?;
            perturbed.get_mut(name).expect("present").data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(grad.data()[i], numeric, opts.abs_floor);
            checked += 1;
            if err > worst.0 || worst.1.is_empty() {
                worst = (err, format!("{name}[{i}]"));
            }
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_parameter: worst.1,
        epsilon: eps,
        entries_checked: checked,
    })
}
