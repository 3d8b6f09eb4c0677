//! Column format for semantic roles.
//!
//! One token per line: the word, the predicate sense (or `-`), then one role
//! column per predicate in order of appearance. Sentences end at a blank
//! line. Role columns use either bracket notation (`(A0*`, `*`, `*)`,
//! `(V*)`) or plain BIO tags. A line `#doc <id>` between sentences starts a
//! new document; sentence ids count from 0 within a document.

use std::fmt::Write as _;
use std::sync::Arc;

use rolemtl_core::corpus::{decode_bio, LabeledSpan, RoleInstance, Sentence, Span, Task};

use crate::error::{Error, Result};

const DOC_DIRECTIVE: &str = "#doc ";

struct Row<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

/// Parses a whole file. `source_name` is used in error messages and as the
/// document id until the first `#doc` line.
pub fn parse_srl_columns(text: &str, source_name: &str) -> Result<Vec<RoleInstance>> {
    let mut out = Vec::new();
    let mut doc = source_name.to_string();
    let mut sent_id = 0u32;
    let mut rows: Vec<Row> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            if !rows.is_empty() {
                out.extend(sentence(&rows, &doc, sent_id, source_name)?);
                sent_id += 1;
                rows.clear();
            }
            continue;
        }
        if rows.is_empty() {
            if let Some(id) = trimmed.strip_prefix(DOC_DIRECTIVE) {
                doc = id.trim().to_string();
                sent_id = 0;
                continue;
            }
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::format(source_name, line, "expected at least a word and a predicate field"));
        }
        if let Some(first) = rows.first() {
            if first.fields.len() != fields.len() {
                return Err(Error::format(
                    source_name,
                    line,
                    format!("{} fields, but the sentence started with {}", fields.len(), first.fields.len()),
                ));
            }
        }
        rows.push(Row { line, fields });
    }
    if !rows.is_empty() {
        out.extend(sentence(&rows, &doc, sent_id, source_name)?);
    }
    Ok(out)
}

fn sentence(rows: &[Row], doc: &str, sent_id: u32, source_name: &str) -> Result<Vec<RoleInstance>> {
    let first = rows[0].line;
    let preds: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.fields[1] != "-").map(|(i, _)| i).collect();
    let n_cols = rows[0].fields.len() - 2;
    if preds.len() != n_cols {
        return Err(Error::format(
            source_name,
            first,
            format!("{} predicates but {n_cols} role columns", preds.len()),
        ));
    }
    let tokens = rows.iter().map(|r| r.fields[0].to_string()).collect();
    let s = Arc::new(Sentence::new(doc, sent_id, tokens)?);
    let mut out = Vec::with_capacity(n_cols);
    for (col, &p) in preds.iter().enumerate() {
        let cells: Vec<&str> = rows.iter().map(|r| r.fields[2 + col]).collect();
        let spans = decode_column(&cells, rows, source_name)?;
        let roles = spans.into_iter().filter(|s| s.label != "V").collect();
        out.push(RoleInstance::new(Arc::clone(&s), Task::Srl, Span::new(p, p), roles)?);
    }
    Ok(out)
}

fn is_bio(cell: &str) -> bool {
    cell == "O" || cell.starts_with("B-") || cell.starts_with("I-")
}

fn decode_column(cells: &[&str], rows: &[Row], source_name: &str) -> Result<Vec<LabeledSpan>> {
    if cells.iter().all(|c| is_bio(c)) {
        return Ok(decode_bio(cells));
    }
    let mut out = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let err = |reason: String| Error::format(source_name, rows[i].line, reason);
        let star = cell.find('*').ok_or_else(|| err(format!("bad role cell {cell:?}")))?;
        let (head, tail) = (&cell[..star], &cell[star + 1..]);
        if let Some(label) = head.strip_prefix('(') {
            if label.is_empty() || label.contains('(') {
                return Err(err(format!("unsupported role cell {cell:?}")));
            }
            if let Some((l, _)) = &open {
                return Err(err(format!("span {l} still open")));
            }
            open = Some((label.to_string(), i));
        } else if !head.is_empty() {
            return Err(err(format!("bad role cell {cell:?}")));
        }
        if let Some(close) = tail.strip_suffix(')') {
            let (label, start) = open.take().ok_or_else(|| err("closing a span that is not open".into()))?;
            if !close.is_empty() && close != label {
                return Err(err(format!("span {label} closed as {close}")));
            }
            out.push(LabeledSpan::new(label, start, i));
        } else if !tail.is_empty() {
            return Err(err(format!("bad role cell {cell:?}")));
        }
    }
    if let Some((label, start)) = open {
        return Err(Error::format(source_name, rows[start].line, format!("span {label} never closed")));
    }
    Ok(out)
}

/// Writes instances back in bracket notation. Instances of one sentence must
/// be adjacent and share the sentence.
pub fn write_srl_columns(instances: &[RoleInstance]) -> Result<String> {
    let mut out = String::new();
    let mut doc: Option<&str> = None;
    let mut i = 0;
    while i < instances.len() {
        let s = instances[i].sentence();
        let mut j = i + 1;
        while j < instances.len() && instances[j].sentence() == s {
            j += 1;
        }
        let mut group: Vec<&RoleInstance> = instances[i..j].iter().collect();
        group.sort_by_key(|g| g.trigger().start);
        for (a, b) in group.iter().zip(group.iter().skip(1)) {
            if a.trigger() == b.trigger() {
                return Err(Error::Runtime(format!("{}: two predicates on one token", s.record_id())));
            }
        }
        if group.iter().any(|g| g.task() != Task::Srl || g.trigger().len() != 1) {
            return Err(Error::Runtime(format!("{}: not a single-token predicate instance", s.record_id())));
        }
        if doc != Some(s.doc_id.as_str()) {
            writeln!(out, "{DOC_DIRECTIVE}{}", s.doc_id).unwrap();
            doc = Some(&s.doc_id);
        }
        for (t, word) in s.tokens.iter().enumerate() {
            let is_pred = group.iter().any(|g| g.trigger().start == t);
            write!(out, "{word}\t{}", if is_pred { word.as_str() } else { "-" }).unwrap();
            for g in &group {
                let mut spans: Vec<LabeledSpan> = g.roles().to_vec();
                spans.push(LabeledSpan { label: "V".into(), span: g.trigger() });
                let mut cell = String::new();
                if let Some(sp) = spans.iter().find(|sp| sp.span.start == t) {
                    write!(cell, "({}", sp.label).unwrap();
                }
                cell.push('*');
                if spans.iter().any(|sp| sp.span.end == t) {
                    cell.push(')');
                }
                write!(out, "\t{cell}").unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
        i = j;
    }
    Ok(out)
}
