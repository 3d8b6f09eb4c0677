use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Document-level cross-validation plan with a dev set held fixed across
/// folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub seed: u64,
    pub dev: Vec<String>,
    pub folds: Vec<Fold>,
}

/// Shuffles the (deduplicated, sorted) document ids with `seed`, takes the
/// first `dev_count` as the dev set and deals the rest into `k` test folds of
/// near-equal size.
pub fn make_folds(doc_ids: &[String], k: usize, dev_count: usize, seed: u64) -> Result<CvPlan> {
    if k < 2 {
        return Err(Error::Contract(format!("need k >= 2 folds, got {k}")));
    }
    let unique: BTreeSet<&String> = doc_ids.iter().collect();
    let mut docs: Vec<String> = unique.into_iter().cloned().collect();
    if dev_count >= docs.len() || docs.len() - dev_count < k {
        return Err(Error::Contract(format!(
            "{} documents cannot provide {dev_count} dev documents and {k} test folds",
            docs.len()
        )));
    }
    docs.shuffle(&mut rng::stream(seed, "folds"));
    let rest = docs.split_off(dev_count);
    let dev = docs;
    let base = rest.len() / k;
    let extra = rest.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let test = rest[at..at + size].to_vec();
        let train = rest[..at].iter().chain(&rest[at + size..]).cloned().collect();
        folds.push(Fold { train, test });
        at += size;
    }
    Ok(CvPlan { k, seed, dev, folds })
}
