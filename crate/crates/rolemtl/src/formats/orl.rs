//! Opinion corpus as JSON: an array of sentences, each with its opinion
//! expressions and their holder and target spans (token indices, inclusive).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rolemtl_core::corpus::{LabeledSpan, RoleInstance, Sentence, Span, Task, HOLDER, TARGET};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrlRecord {
    pub doc_id: String,
    pub sent_id: u32,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub opinions: Vec<OrlOpinion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrlOpinion {
    pub expr: [usize; 2],
    #[serde(default)]
    pub holders: Vec<[usize; 2]>,
    #[serde(default)]
    pub targets: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude: Option<String>,
}

fn span(p: [usize; 2]) -> Span {
    Span { start: p[0], end: p[1] }
}

/// One instance per opinion expression. Records without opinions yield
/// nothing; opinions without roles are kept.
pub fn parse_orl_json(text: &str, source_name: &str) -> Result<Vec<RoleInstance>> {
    let records: Vec<OrlRecord> =
        serde_json::from_str(text).map_err(|e| Error::format(source_name, e.line(), e.to_string()))?;
    records_to_instances(&records)
}

pub fn records_to_instances(records: &[OrlRecord]) -> Result<Vec<RoleInstance>> {
    let mut out = Vec::new();
    for r in records {
        let s = Arc::new(Sentence::new(r.doc_id.clone(), r.sent_id, r.tokens.clone())?);
        for o in &r.opinions {
            let roles = o
                .holders
                .iter()
                .map(|&h| LabeledSpan { label: HOLDER.into(), span: span(h) })
                .chain(o.targets.iter().map(|&t| LabeledSpan { label: TARGET.into(), span: span(t) }))
                .collect();
            out.push(RoleInstance::new(Arc::clone(&s), Task::Orl, span(o.expr), roles)?);
        }
    }
    Ok(out)
}

/// Groups adjacent instances of the same sentence back into records.
pub fn instances_to_records(instances: &[RoleInstance]) -> Vec<OrlRecord> {
    let mut out: Vec<OrlRecord> = Vec::new();
    for inst in instances {
        let s = inst.sentence();
        let opinion = OrlOpinion {
            expr: [inst.trigger().start, inst.trigger().end],
            holders: inst.roles_of(HOLDER).map(|p| [p.start, p.end]).collect(),
            targets: inst.roles_of(TARGET).map(|p| [p.start, p.end]).collect(),
            attitude: None,
        };
        match out.last_mut() {
            Some(r) if r.doc_id == s.doc_id && r.sent_id == s.sent_id && r.tokens == s.tokens => r.opinions.push(opinion),
            _ => out.push(OrlRecord {
                doc_id: s.doc_id.clone(),
                sent_id: s.sent_id,
                tokens: s.tokens.clone(),
                opinions: vec![opinion],
            }),
        }
    }
    out
}

pub fn write_orl_json(instances: &[RoleInstance]) -> String {
    serde_json::to_string_pretty(&instances_to_records(instances)).expect("plain data")
}
