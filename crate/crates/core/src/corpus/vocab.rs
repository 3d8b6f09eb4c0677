use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RoleInstance;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map. Index 0 is padding, index 1 the unknown token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut index = BTreeMap::new();
        index.insert(PAD_TOKEN.to_string(), 0);
        index.insert(UNK_TOKEN.to_string(), 1);
        for t in tokens {
            let t = t.as_ref();
            if !index.contains_key(t) {
                index.insert(t.to_string(), list.len());
                list.push(t.to_string());
            }
        }
        Self { tokens: list, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_index(&self) -> usize {
        0
    }

    pub fn unk_index(&self) -> usize {
        1
    }

    /// Index of `token`, or the unknown index.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over every token of the given instances (all tasks), in
/// sorted order.
pub fn build_vocab<'a>(instances: impl IntoIterator<Item = &'a RoleInstance>) -> Vocabulary {
    let words: BTreeSet<&str> = instances
        .into_iter()
        .flat_map(|i| i.tokens().iter().map(String::as_str))
        .collect();
    Vocabulary::from_tokens(words)
}

/// Frozen word vectors, one row per vocabulary index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Tensor,
    /// Vocabulary entries that had no pretrained vector.
    pub missing: usize,
}

impl EmbeddingMatrix {
    /// Assembles the matrix from the pretrained vectors found for vocabulary
    /// words. Words without a vector (and the unknown token) get the mean of
    /// *all* pretrained vectors; padding gets zeros.
    pub fn assemble(
        vocab: &Vocabulary,
        dim: usize,
        found: &BTreeMap<String, Vec<f64>>,
        mean_of_all: &[f64],
    ) -> Result<Self> {
        if mean_of_all.len() != dim {
            return Err(Error::shape("embedding mean", &[dim], &[mean_of_all.len()]));
        }
        let mut data = Vec::with_capacity(vocab.len() * dim);
        let mut missing = 0;
        for (i, tok) in vocab.tokens().iter().enumerate() {
            if i == vocab.pad_index() {
                data.extend(core::iter::repeat(0.0).take(dim));
                continue;
            }
            match found.get(tok) {
                Some(v) if v.len() == dim => data.extend_from_slice(v),
                Some(v) => {
                    return Err(Error::Contract(format!(
                        "vector for {tok:?} has {} values, expected {dim}",
                        v.len()
                    )))
                }
                None => {
                    if i != vocab.unk_index() {
                        missing += 1;
                    }
                    data.extend_from_slice(mean_of_all);
                }
            }
        }
        Ok(Self {
            dim,
            rows: Tensor::new(vec![vocab.len(), dim], data)?,
            missing,
        })
    }

    /// Element-wise mean of `vectors` (zeros when there are none).
    pub fn mean_of<'a>(vectors: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        let mut n = 0usize;
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            n += 1;
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }

    /// [`EmbeddingMatrix::assemble`] where every pretrained vector is in
    /// `found`.
    pub fn from_vectors(vocab: &Vocabulary, dim: usize, vectors: &BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mean = Self::mean_of(vectors.values().map(Vec::as_slice), dim);
        Self::assemble(vocab, dim, vectors, &mean)
    }

    pub fn from_tensor(rows: Tensor) -> Result<Self> {
        let (_, dim) = rows.dims2()?;
        Ok(Self { dim, rows, missing: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.rows
    }
}
