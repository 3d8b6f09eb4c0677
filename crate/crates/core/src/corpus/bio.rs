use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::LabeledSpan;
use crate::error::{Error, Result};

/// Tags `length` tokens with the given non-overlapping spans.
pub fn encode_bio(spans: &[LabeledSpan], length: usize) -> Result<Vec<String>> {
    let mut tags = vec![String::from("O"); length];
    let mut taken = vec![false; length];
    for s in spans {
        if s.span.start > s.span.end || s.span.end >= length {
            return Err(Error::Contract(format!(
                "span {:?} outside sequence of length {length}",
                s.span
            )));
        }
        for i in s.span.start..=s.span.end {
            if taken[i] {
                return Err(Error::Contract(format!("span {} {:?} overlaps another span", s.label, s.span)));
            }
            taken[i] = true;
            let prefix = if i == s.span.start { "B-" } else { "I-" };
            tags[i] = format!("{prefix}{}", s.label);
        }
    }
    Ok(tags)
}

/// Reads spans back from BIO tags.
///
/// An `I-X` that does not continue an open `X` span starts a new one. Any
/// tag without a `B-`/`I-` prefix counts as outside.
pub fn decode_bio<S: AsRef<str>>(tags: &[S]) -> Vec<LabeledSpan> {
    let mut out: Vec<LabeledSpan> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if let Some(label) = tag.strip_prefix("B-") {
            out.push(LabeledSpan::new(label, i, i));
            open = Some(out.len() - 1);
        } else if let Some(label) = tag.strip_prefix("I-") {
            match open {
                Some(j) if out[j].label == label && out[j].span.end + 1 == i => out[j].span.end = i,
                _ => {
                    out.push(LabeledSpan::new(label.to_string(), i, i));
                    open = Some(out.len() - 1);
                }
            }
        } else {
            open = None;
        }
    }
    out
}
