//! Span scoring (binary and proportional for opinion roles, exact match for
//! semantic roles), cross-validation summaries, the two-sample
//! Kolmogorov-Smirnov test and prediction-stability analysis.

mod ks;
mod stability;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSpan, RoleInstance, Span, HOLDER, TARGET};
use crate::error::{Error, Result};

pub use ks::{kolmogorov_survival, ks_test, KsResult};
pub use stability::{
    distance_stats, span_distance, stability_analysis, Stability, StabilityConfig, StabilityReport, RoleVerdict,
    DistanceStats,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

impl Prf {
    /// F1 is 0 when `p + r == 0`.
    pub fn new(p: f64, r: f64) -> Self {
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Self { p, r, f1 }
    }
}

fn ratio(num: f64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

/// Sum of per-span coverage fractions `covered / len`, kept exactly as
/// integer numerators grouped by span length.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credit(pub BTreeMap<usize, u64>);

impl Credit {
    fn add_span(&mut self, covered: usize, len: usize) {
        *self.0.entry(len).or_insert(0) += covered as u64;
    }

    fn merge(&mut self, other: &Credit) {
        for (&len, &c) in &other.0 {
            *self.0.entry(len).or_insert(0) += c;
        }
    }

    pub fn value(&self) -> f64 {
        self.0.iter().map(|(&len, &c)| c as f64 / len as f64).sum()
    }
}

/// Corpus-level tallies for one role type; add instances with
/// [`SpanCounts::add`] and read scores off at the end (micro average).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub n_pred: u64,
    pub n_gold: u64,
    /// Predicted spans overlapping at least one gold span.
    pub pred_overlapping: u64,
    /// Gold spans overlapped by at least one predicted span.
    pub gold_overlapped: u64,
    /// Σ over predicted spans of the fraction of their tokens inside gold.
    pub pred_credit: Credit,
    /// Σ over gold spans of the fraction of their tokens inside predictions.
    pub gold_credit: Credit,
}

fn covered_by(span: Span, others: &[Span]) -> usize {
    (span.start..=span.end)
        .filter(|&i| others.iter().any(|o| o.contains(i)))
        .count()
}

impl SpanCounts {
    /// Tallies for one instance.
    pub fn of(pred: &[Span], gold: &[Span]) -> Self {
        let mut c = SpanCounts {
            n_pred: pred.len() as u64,
            n_gold: gold.len() as u64,
            ..Default::default()
        };
        for p in pred {
            if gold.iter().any(|g| g.overlaps(p)) {
                c.pred_overlapping += 1;
            }
            c.pred_credit.add_span(covered_by(*p, gold), p.len());
        }
        for g in gold {
            if pred.iter().any(|p| p.overlaps(g)) {
                c.gold_overlapped += 1;
            }
            c.gold_credit.add_span(covered_by(*g, pred), g.len());
        }
        c
    }

    pub fn add(&mut self, other: &SpanCounts) {
        self.n_pred += other.n_pred;
        self.n_gold += other.n_gold;
        self.pred_overlapping += other.pred_overlapping;
        self.gold_overlapped += other.gold_overlapped;
        self.pred_credit.merge(&other.pred_credit);
        self.gold_credit.merge(&other.gold_credit);
    }

    pub fn binary(&self) -> Prf {
        Prf::new(
            ratio(self.pred_overlapping as f64, self.n_pred),
            ratio(self.gold_overlapped as f64, self.n_gold),
        )
    }

    pub fn proportional(&self) -> Prf {
        Prf::new(
            ratio(self.pred_credit.value(), self.n_pred),
            ratio(self.gold_credit.value(), self.n_gold),
        )
    }
}

/// A predicted span counts if it overlaps any gold span; a gold span counts
/// if any prediction overlaps it.
pub fn binary_prf(pred: &[Span], gold: &[Span]) -> Prf {
    SpanCounts::of(pred, gold).binary()
}

/// Partial credit: each gold span contributes the fraction of its tokens
/// covered by the union of predicted spans (recall), and symmetrically for
/// precision.
pub fn proportional_prf(pred: &[Span], gold: &[Span]) -> Prf {
    SpanCounts::of(pred, gold).proportional()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCounts {
    pub n_pred: u64,
    pub n_gold: u64,
    pub correct: u64,
}

impl ExactCounts {
    /// Exact `(label, start, end)` matches; predicate (`V`) spans are
    /// ignored on both sides.
    pub fn of(pred: &[LabeledSpan], gold: &[LabeledSpan]) -> Self {
        let keep = |s: &&LabeledSpan| s.label != "V";
        let pred: Vec<&LabeledSpan> = pred.iter().filter(keep).collect();
        let gold: Vec<&LabeledSpan> = gold.iter().filter(keep).collect();
        let correct = pred.iter().filter(|p| gold.contains(p)).count();
        Self {
            n_pred: pred.len() as u64,
            n_gold: gold.len() as u64,
            correct: correct as u64,
        }
    }

    pub fn add(&mut self, other: &ExactCounts) {
        self.n_pred += other.n_pred;
        self.n_gold += other.n_gold;
        self.correct += other.correct;
    }

    pub fn prf(&self) -> Prf {
        Prf::new(ratio(self.correct as f64, self.n_pred), ratio(self.correct as f64, self.n_gold))
    }
}

pub fn srl_prf(pred: &[LabeledSpan], gold: &[LabeledSpan]) -> Prf {
    ExactCounts::of(pred, gold).prf()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleScores {
    pub counts: SpanCounts,
    pub binary: Prf,
    pub proportional: Prf,
}

/// Binary and proportional scores per opinion role.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanMetricsReport {
    pub roles: BTreeMap<String, RoleScores>,
}

impl SpanMetricsReport {
    pub fn from_counts(counts: BTreeMap<String, SpanCounts>) -> Self {
        let roles = counts
            .into_iter()
            .map(|(label, c)| {
                let s = RoleScores {
                    binary: c.binary(),
                    proportional: c.proportional(),
                    counts: c,
                };
                (label, s)
            })
            .collect();
        Self { roles }
    }

    pub fn role(&self, label: &str) -> Option<&RoleScores> {
        self.roles.get(label)
    }

    /// Mean of holder and target proportional F1, the model-selection
    /// score.
    pub fn selection_score(&self) -> f64 {
        let f = |l: &str| self.role(l).map_or(0.0, |s| s.proportional.f1);
        (f(HOLDER) + f(TARGET)) / 2.0
    }
}

fn spans_of(roles: &[LabeledSpan], label: &str) -> Vec<Span> {
    roles.iter().filter(|r| r.label == label).map(|r| r.span).collect()
}

/// Scores predicted holder and target spans against gold opinion
/// instances, pairing each prediction with its own instance.
pub fn evaluate_orl(pred: &[Vec<LabeledSpan>], gold: &[RoleInstance]) -> Result<SpanMetricsReport> {
    if pred.len() != gold.len() {
        return Err(Error::Contract(alloc::format!(
            "{} predictions for {} gold instances",
            pred.len(),
            gold.len()
        )));
    }
    let mut counts: BTreeMap<String, SpanCounts> = BTreeMap::new();
    for label in [HOLDER, TARGET] {
        let c = counts.entry(String::from(label)).or_default();
        for (p, g) in pred.iter().zip(gold) {
            c.add(&SpanCounts::of(&spans_of(p, label), &spans_of(g.roles(), label)));
        }
    }
    Ok(SpanMetricsReport::from_counts(counts))
}

/// Micro-averaged exact-match scores for semantic roles.
pub fn evaluate_srl(pred: &[Vec<LabeledSpan>], gold: &[RoleInstance]) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::contract("prediction and gold counts differ"));
    }
    let mut c = ExactCounts::default();
    for (p, g) in pred.iter().zip(gold) {
        c.add(&ExactCounts::of(p, g.roles()));
    }
    Ok(c.prf())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
}

pub fn aggregate_cv(values: &[f64]) -> Result<CvSummary> {
    if values.len() < 2 {
        return Err(Error::contract("cross-validation summary needs at least two folds"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(CvSummary {
        values: values.to_vec(),
        mean,
        sd: libm::sqrt(var),
    })
}
