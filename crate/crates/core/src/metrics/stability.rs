use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSpan, RoleInstance, Span};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    EasyCorrect,
    HardIncorrect,
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub trials: usize,
    /// Correct in at least this many trials: easy.
    pub easy_min: usize,
    /// Correct in at most this many trials: hard.
    pub hard_max: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            trials: 8,
            easy_min: 6,
            hard_max: 2,
        }
    }
}

impl StabilityConfig {
    pub fn categorize(&self, correct_trials: usize) -> Stability {
        if correct_trials >= self.easy_min {
            Stability::EasyCorrect
        } else if correct_trials <= self.hard_max {
            Stability::HardIncorrect
        } else {
            Stability::Unstable
        }
    }
}

/// One gold role of one opinion, judged across all trials.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleVerdict {
    pub instance: usize,
    pub record_id: String,
    pub label: String,
    pub span: Span,
    pub trigger: Span,
    pub correct_trials: usize,
    pub category: Stability,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdicts: Vec<RoleVerdict>,
    pub easy_correct: usize,
    pub hard_incorrect: usize,
    pub unstable: usize,
}

/// `trials[k][i]` holds the roles predicted for `gold[i]` in trial `k`. A
/// gold role is correct in a trial when some prediction with its label
/// overlaps it.
pub fn stability_analysis(
    trials: &[Vec<Vec<LabeledSpan>>],
    gold: &[RoleInstance],
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    if trials.len() != cfg.trials {
        return Err(Error::Contract(format!(
            "expected {} trials, got {}",
            cfg.trials,
            trials.len()
        )));
    }
    if let Some(k) = trials.iter().position(|t| t.len() != gold.len()) {
        return Err(Error::Contract(format!(
            "trial {k} has {} predictions for {} gold instances",
            trials[k].len(),
            gold.len()
        )));
    }
    let mut report = StabilityReport::default();
    for (i, inst) in gold.iter().enumerate() {
        for role in inst.roles() {
            let correct_trials = trials
                .iter()
                .filter(|t| t[i].iter().any(|p| p.label == role.label && p.span.overlaps(&role.span)))
                .count();
            let category = cfg.categorize(correct_trials);
            match category {
                Stability::EasyCorrect => report.easy_correct += 1,
                Stability::HardIncorrect => report.hard_incorrect += 1,
                Stability::Unstable => report.unstable += 1,
            }
            report.verdicts.push(RoleVerdict {
                instance: i,
                record_id: inst.sentence().record_id(),
                label: role.label.clone(),
                span: role.span,
                trigger: inst.trigger(),
                correct_trials,
                category,
            });
        }
    }
    Ok(report)
}

/// Token distance between the nearest boundaries of two spans; 0 when they
/// overlap, 1 when adjacent.
pub fn span_distance(role: Span, trigger: Span) -> usize {
    if role.overlaps(&trigger) {
        0
    } else if role.end < trigger.start {
        trigger.start - role.end
    } else {
        role.start - trigger.end
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub count: usize,
    pub mean: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub easy_correct: DistanceSummary,
    pub hard_incorrect: DistanceSummary,
    pub unstable: DistanceSummary,
}

/// Mean role-to-trigger distance per stability category for roles labeled
/// `label`.
pub fn distance_stats(verdicts: &[RoleVerdict], label: &str) -> DistanceStats {
    let summary = |cat: Stability| {
        let d: Vec<usize> = verdicts
            .iter()
            .filter(|v| v.category == cat && v.label == label)
            .map(|v| span_distance(v.span, v.trigger))
            .collect();
        DistanceSummary {
            count: d.len(),
            mean: (!d.is_empty()).then(|| d.iter().sum::<usize>() as f64 / d.len() as f64),
        }
    };
    DistanceStats {
        easy_correct: summary(Stability::EasyCorrect),
        hard_incorrect: summary(Stability::HardIncorrect),
        unstable: summary(Stability::Unstable),
    }
}
