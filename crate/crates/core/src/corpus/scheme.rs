use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{RoleInstance, Task, HOLDER, TARGET};
use crate::error::{Error, Result};

/// Ordered tag inventory of one task. `O` is always index 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub task: Task,
    tags: Vec<String>,
}

impl LabelScheme {
    /// The 7-tag opinion scheme: `O`, holder, target and the opinion
    /// expression itself.
    pub fn orl() -> Self {
        Self::from_labels(Task::Orl, [HOLDER, TARGET, Task::Orl.trigger_label()])
    }

    /// `O` followed by `B-X`, `I-X` for each label, in the given order
    /// (duplicates ignored).
    pub fn from_labels<'a>(task: Task, labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tags = alloc::vec![String::from("O")];
        let mut seen = BTreeSet::new();
        for l in labels {
            if seen.insert(l) {
                tags.push(format!("B-{l}"));
                tags.push(format!("I-{l}"));
            }
        }
        Self { task, tags }
    }

    /// SRL inventory from the labels observed in `instances` (sorted), plus
    /// the predicate label.
    pub fn srl_from_instances<'a>(instances: impl IntoIterator<Item = &'a RoleInstance>) -> Self {
        let mut labels: BTreeSet<String> = instances
            .into_iter()
            .flat_map(|i| i.roles().iter().map(|r| r.label.clone()))
            .collect();
        labels.insert(Task::Srl.trigger_label().to_string());
        Self::from_labels(Task::Srl, labels.iter().map(String::as_str))
    }

    /// Rebuilds a scheme from a stored tag list, checking its invariants.
    pub fn from_tags(task: Task, tags: Vec<String>) -> Result<Self> {
        let s = Self { task, tags };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tags.first().map(String::as_str) != Some("O") {
            return Err(Error::contract("label scheme must start with O"));
        }
        for t in &self.tags {
            if let Some(l) = t.strip_prefix("I-") {
                if self.index(&format!("B-{l}")).is_none() {
                    return Err(Error::Contract(format!("tag {t} has no matching B-{l}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag(&self, i: usize) -> &str {
        &self.tags[i]
    }

    pub fn index(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn outside(&self) -> usize {
        0
    }

    /// Tag ids of an instance; tags unknown to this scheme map to `O`.
    pub fn encode(&self, instance: &RoleInstance) -> Vec<usize> {
        instance
            .tags()
            .iter()
            .map(|t| self.index(t).unwrap_or(0))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.tag(i)).collect()
    }
}
