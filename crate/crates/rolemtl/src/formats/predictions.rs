//! Prediction dumps: one JSON object per trigger with the predicted roles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use rolemtl_core::corpus::{LabeledSpan, RoleInstance, Span, Task};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedRole {
    pub label: String,
    pub span: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub sent_id: u32,
    pub task: Task,
    /// The opinion expression or predicate.
    pub trigger: [usize; 2],
    pub roles: Vec<PredictedRole>,
}

impl PredictionRecord {
    pub fn new(instance: &RoleInstance, roles: &[LabeledSpan]) -> Self {
        let s = instance.sentence();
        let t = instance.trigger();
        Self {
            doc_id: s.doc_id.clone(),
            sent_id: s.sent_id,
            task: instance.task(),
            trigger: [t.start, t.end],
            roles: roles
                .iter()
                .map(|r| PredictedRole { label: r.label.clone(), span: [r.span.start, r.span.end] })
                .collect(),
        }
    }

    pub fn labeled_spans(&self) -> Vec<LabeledSpan> {
        self.roles.iter().map(|r| LabeledSpan::new(r.label.clone(), r.span[0], r.span[1])).collect()
    }

    fn key(&self) -> (Task, &str, u32, Span) {
        (self.task, &self.doc_id, self.sent_id, Span::new(self.trigger[0], self.trigger[1]))
    }
}

pub fn write_predictions(records: &[PredictionRecord]) -> String {
    serde_json::to_string_pretty(records).expect("plain data")
}

pub fn read_predictions(text: &str, source_name: &str) -> Result<Vec<PredictionRecord>> {
    serde_json::from_str(text).map_err(|e| Error::format(source_name, e.line(), e.to_string()))
}

/// Predicted roles for each gold instance, looked up by document, sentence
/// and trigger. Every gold instance must have exactly one record.
pub fn align(records: &[PredictionRecord], gold: &[RoleInstance], source_name: &str) -> Result<Vec<Vec<LabeledSpan>>> {
    let mut by_key = BTreeMap::new();
    for r in records {
        if by_key.insert(r.key(), r).is_some() {
            return Err(Error::Runtime(format!(
                "{source_name}: two predictions for {}#{} trigger {:?}",
                r.doc_id, r.sent_id, r.trigger
            )));
        }
    }
    gold.iter()
        .map(|g| {
            let s = g.sentence();
            by_key
                .get(&(g.task(), s.doc_id.as_str(), s.sent_id, g.trigger()))
                .map(|r| r.labeled_spans())
                .ok_or_else(|| {
                    Error::Runtime(format!(
                        "{source_name}: no prediction for {} trigger [{}, {}]",
                        s.record_id(),
                        g.trigger().start,
                        g.trigger().end
                    ))
                })
        })
        .collect()
}
