//! Seeded toy corpora with a known, learnable role structure.
//!
//! Every sentence is `filler* left-run cue right-run filler*`: the cue word
//! is the trigger and the two entity runs hugging it are the roles. Filler
//! is mostly function words, with entity words never adjacent to a run, so
//! span boundaries stay recoverable.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSpan, RoleInstance, Sentence, Span, Task, HOLDER, TARGET};
use crate::error::{Error, Result};
use crate::rng;

/// Cues whose holder sits on the left (the A0 side).
pub const LEFT_HOLDER_CUES: [&str; 2] = ["fearish", "dreadish"];
/// Cues whose holder sits on the right (the A1 side).
pub const RIGHT_HOLDER_CUES: [&str; 2] = ["pleaseish", "amuseish"];

const MAX_RUN: usize = 3;
const SENTENCES_PER_DOC: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Opinion: one-token holder just left of the cue, target run right.
    HolderLeft,
    /// Opinion: one-token holder just right of the cue, target run left.
    HolderRight,
    /// Semantic roles: `A0` run left of the predicate, `A1` run right.
    SrlA0a1,
    /// Opinion: holder on the left for fear-like cues and on the right for
    /// please-like cues; the two cue classes alternate.
    MixedMapping,
}

impl Pattern {
    pub fn task(self) -> Task {
        match self {
            Pattern::SrlA0a1 => Task::Srl,
            _ => Task::Orl,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_sentences: usize,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pattern: Pattern,
    /// Fraction of instances whose roles are all removed.
    pub noise_rate: f64,
    pub seed: u64,
    /// Prefix every word form with the task name so that corpora of
    /// different tasks share no vocabulary.
    #[serde(default)]
    pub disjoint_vocab: bool,
}

impl SynthSpec {
    pub fn new(pattern: Pattern, n_sentences: usize, seed: u64) -> Self {
        Self {
            n_sentences,
            vocab_size: 40,
            min_len: 6,
            max_len: 14,
            pattern,
            noise_rate: 0.0,
            seed,
            disjoint_vocab: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len < 3 || self.max_len < self.min_len {
            return Err(Error::contract("need 3 <= min_len <= max_len"));
        }
        if self.vocab_size < 10 {
            return Err(Error::contract("vocab_size must be at least 10"));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::contract("noise_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Word inventory determined by `vocab_size` alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lexicon {
    pub left_cues: Vec<String>,
    pub right_cues: Vec<String>,
    pub entities: Vec<String>,
    pub functions: Vec<String>,
}

impl Lexicon {
    pub fn new(vocab_size: usize) -> Self {
        let rest = vocab_size.saturating_sub(LEFT_HOLDER_CUES.len() + RIGHT_HOLDER_CUES.len()).max(2);
        let n_ent = rest / 2;
        Self {
            left_cues: LEFT_HOLDER_CUES.iter().map(|s| String::from(*s)).collect(),
            right_cues: RIGHT_HOLDER_CUES.iter().map(|s| String::from(*s)).collect(),
            entities: (0..n_ent).map(|i| format!("ent{i}")).collect(),
            functions: (0..rest - n_ent).map(|i| format!("fn{i}")).collect(),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.left_cues
            .iter()
            .chain(&self.right_cues)
            .chain(&self.entities)
            .chain(&self.functions)
    }

    pub fn holder_on_left(&self, cue: &str) -> Option<bool> {
        if self.left_cues.iter().any(|c| c == cue) {
            Some(true)
        } else if self.right_cues.iter().any(|c| c == cue) {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub instances: Vec<RoleInstance>,
}

fn pick<'a, R: Rng>(r: &mut R, words: &'a [String]) -> &'a str {
    &words[r.gen_range(0..words.len())]
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let lex = Lexicon::new(spec.vocab_size);
    let mut r = rng::stream(spec.seed, "synth");
    let task = spec.pattern.task();
    let prefix = if spec.disjoint_vocab { format!("{}:", task.name()) } else { String::new() };
    let mut instances = Vec::with_capacity(spec.n_sentences);
    for i in 0..spec.n_sentences {
        let len = r.gen_range(spec.min_len..=spec.max_len);
        let (left, right) = match spec.pattern {
            Pattern::HolderLeft => (1, r.gen_range(1..=MAX_RUN.min(len - 2))),
            Pattern::HolderRight => {
                let left = r.gen_range(1..=MAX_RUN.min(len - 2));
                (left, 1)
            }
            Pattern::SrlA0a1 | Pattern::MixedMapping => {
                let left = r.gen_range(1..=MAX_RUN.min(len - 2));
                (left, r.gen_range(1..=MAX_RUN.min(len - 1 - left)))
            }
        };
        let cue_class_left = i % 2 == 0;
        let cue = match spec.pattern {
            Pattern::MixedMapping | Pattern::SrlA0a1 => {
                pick(&mut r, if cue_class_left { &lex.left_cues } else { &lex.right_cues })
            }
            _ => {
                let k = r.gen_range(0..lex.left_cues.len() + lex.right_cues.len());
                if k < lex.left_cues.len() {
                    &lex.left_cues[k]
                } else {
                    &lex.right_cues[k - lex.left_cues.len()]
                }
            }
        };
        let start = r.gen_range(0..=len - (left + 1 + right));
        let cue_at = start + left;
        let right_end = cue_at + right;
        let mut tokens = Vec::with_capacity(len);
        for t in 0..len {
            let w = if t == cue_at {
                cue
            } else if (start..cue_at).contains(&t) || (cue_at + 1..=right_end).contains(&t) {
                pick(&mut r, &lex.entities)
            } else if t + 1 == start || t == right_end + 1 || r.gen::<f64>() >= 0.3 {
                pick(&mut r, &lex.functions)
            } else {
                pick(&mut r, &lex.entities)
            };
            tokens.push(format!("{prefix}{w}"));
        }
        let left_span = Span::new(start, cue_at - 1);
        let right_span = Span::new(cue_at + 1, right_end);
        let (l_label, r_label) = match spec.pattern {
            Pattern::HolderLeft => (HOLDER, TARGET),
            Pattern::HolderRight => (TARGET, HOLDER),
            Pattern::SrlA0a1 => ("A0", "A1"),
            Pattern::MixedMapping if cue_class_left => (HOLDER, TARGET),
            Pattern::MixedMapping => (TARGET, HOLDER),
        };
        let mut roles = alloc::vec![
            LabeledSpan { label: String::from(l_label), span: left_span },
            LabeledSpan { label: String::from(r_label), span: right_span },
        ];
        if r.gen::<f64>() < spec.noise_rate {
            roles.clear();
        }
        let doc = format!("synth-{}-{}", task.name(), i / SENTENCES_PER_DOC);
        let sentence = Sentence::new(doc, (i % SENTENCES_PER_DOC) as u32, tokens)?;
        instances.push(RoleInstance::new(Arc::new(sentence), task, Span::new(cue_at, cue_at), roles)?);
    }
    Ok(SynthCorpus {
        spec: spec.clone(),
        instances,
    })
}

/// Seeded Gaussian vectors (scale 0.5) for every word of the lexicon, under
/// the given word prefix.
pub fn synth_embeddings(vocab_size: usize, dim: usize, prefix: &str, seed: u64) -> BTreeMap<String, Vec<f64>> {
    let mut r = rng::stream(seed, "synth-embeddings");
    Lexicon::new(vocab_size)
        .words()
        .map(|w| {
            let v = (0..dim).map(|_| 0.5 * rng::standard_normal(&mut r)).collect();
            (format!("{prefix}{w}"), v)
        })
        .collect()
}
