//! Sentences, role instances and everything needed to turn them into
//! padded mini-batches: BIO tags, label schemes, vocabularies, embeddings,
//! long-sentence windowing and cross-validation plans.

mod batch;
mod bio;
mod folds;
mod scheme;
mod vocab;
mod window;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{epoch_order, Batcher, EncodedInstance, PaddedBatch};
pub use bio::{decode_bio, encode_bio};
pub use folds::{make_folds, CvPlan, Fold};
pub use scheme::LabelScheme;
pub use vocab::{build_vocab, EmbeddingMatrix, Vocabulary, PAD_TOKEN, UNK_TOKEN};
pub use window::{window_instance, Windowed, WINDOW_MAX_LEN, WINDOW_RADIUS};

/// Holder role label.
pub const HOLDER: &str = "H";
/// Target role label.
pub const TARGET: &str = "T";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Srl,
    Orl,
}

impl Task {
    /// Tag label carried by the trigger tokens themselves (the predicate or
    /// the opinion expression), so that no role can claim them.
    pub fn trigger_label(self) -> &'static str {
        match self {
            Task::Srl => "V",
            Task::Orl => "DSE",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Srl => "srl",
            Task::Orl => "orl",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inclusive token span `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    /// Number of tokens shared with `other`.
    pub fn intersection(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledSpan {
    pub label: String,
    pub span: Span,
}

impl LabeledSpan {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            label: label.into(),
            span: Span::new(start, end),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub sent_id: u32,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(doc_id: impl Into<String>, sent_id: u32, tokens: Vec<String>) -> Result<Self> {
        let s = Self {
            doc_id: doc_id.into(),
            sent_id,
            tokens,
        };
        if s.tokens.is_empty() {
            return Err(s.ingestion("sentence has no tokens"));
        }
        if let Some(t) = s.tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(s.ingestion(format!("token {t:?} is empty or contains whitespace")));
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn record_id(&self) -> String {
        format!("{}#{}", self.doc_id, self.sent_id)
    }

    fn ingestion(&self, reason: impl Into<String>) -> Error {
        Error::Ingestion {
            record: self.record_id(),
            reason: reason.into(),
        }
    }
}

/// One sentence paired with one trigger (predicate or opinion expression)
/// and its gold roles.
#[derive(Clone, Debug, PartialEq)]
pub struct RoleInstance {
    sentence: Arc<Sentence>,
    task: Task,
    trigger: Span,
    roles: Vec<LabeledSpan>,
    tags: Vec<String>,
}

impl RoleInstance {
    /// Validates spans and builds the BIO tag sequence. Roles are sorted by
    /// start position.
    pub fn new(sentence: Arc<Sentence>, task: Task, trigger: Span, mut roles: Vec<LabeledSpan>) -> Result<Self> {
        let n = sentence.len();
        let bad = |reason: String| Error::Ingestion {
            record: sentence.record_id(),
            reason,
        };
        if trigger.start > trigger.end || trigger.end >= n {
            return Err(bad(format!("trigger {trigger:?} outside sentence of length {n}")));
        }
        for r in &roles {
            if r.span.start > r.span.end || r.span.end >= n {
                return Err(bad(format!("role {} {:?} outside sentence of length {n}", r.label, r.span)));
            }
            if r.label.is_empty() || r.label == task.trigger_label() {
                return Err(bad(format!("invalid role label {:?}", r.label)));
            }
            if task == Task::Orl && r.label != HOLDER && r.label != TARGET {
                return Err(bad(format!("unknown opinion role {:?}", r.label)));
            }
            if r.span.overlaps(&trigger) {
                return Err(bad(format!("role {} {:?} overlaps the trigger {:?}", r.label, r.span, trigger)));
            }
        }
        roles.sort_by_key(|r| (r.span.start, r.span.end));
        for w in roles.windows(2) {
            if w[0].span.overlaps(&w[1].span) {
                return Err(bad(format!(
                    "roles {} {:?} and {} {:?} overlap",
                    w[0].label, w[0].span, w[1].label, w[1].span
                )));
            }
        }
        let mut all = roles.clone();
        all.push(LabeledSpan {
            label: task.trigger_label().to_string(),
            span: trigger,
        });
        let tags = encode_bio(&all, n).map_err(|e| bad(format!("{e}")))?;
        Ok(Self {
            sentence,
            task,
            trigger,
            roles,
            tags,
        })
    }

    pub fn sentence(&self) -> &Sentence {
        &self.sentence
    }

    pub fn shared_sentence(&self) -> Arc<Sentence> {
        Arc::clone(&self.sentence)
    }

    pub fn tokens(&self) -> &[String] {
        &self.sentence.tokens
    }

    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn trigger(&self) -> Span {
        self.trigger
    }

    pub fn roles(&self) -> &[LabeledSpan] {
        &self.roles
    }

    /// Spans of one role label.
    pub fn roles_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = Span> + 'a {
        self.roles.iter().filter(move |r| r.label == label).map(|r| r.span)
    }

    /// BIO tags, trigger tokens included under [`Task::trigger_label`].
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Recovers role spans from a tag sequence (gold or predicted), dropping
    /// spans labeled with the trigger label.
    pub fn roles_from_tags<S: AsRef<str>>(task: Task, tags: &[S]) -> Vec<LabeledSpan> {
        decode_bio(tags)
            .into_iter()
            .filter(|s| s.label != task.trigger_label())
            .collect()
    }
}
