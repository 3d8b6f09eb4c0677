//! Versioned JSON checkpoints. Every array is stored as its shape plus the
//! base64 of its little-endian `f64` bytes, so values survive bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use rolemtl_core::corpus::{EmbeddingMatrix, Vocabulary};
use rolemtl_core::model::ModelConfig;
use rolemtl_core::mtl::{ArchKind, ArchSpec, MtlModel};
use rolemtl_core::{ParamStore, Tensor};

use crate::error::{read_to_string, write, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: String,
}

impl Array {
    pub fn encode(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        Self { shape: t.shape().to_vec(), data: STANDARD.encode(bytes) }
    }

    pub fn decode(&self, name: &str) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Checkpoint(format!("array `{name}`: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Checkpoint(format!("array `{name}`: {} bytes is not a whole number of f64", bytes.len())));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| Error::Checkpoint(format!("array `{name}`: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    format_version: u32,
    arch: ArchSpec,
    config: ModelConfig,
    vocabulary: Vocabulary,
    embeddings: Array,
    params: BTreeMap<String, Array>,
    best_dev_score: f64,
    iteration: usize,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
}

/// A trained model with everything needed to run it on new text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MtlModel,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingMatrix,
    pub best_dev_score: f64,
    pub iteration: usize,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = File {
            format_version: FORMAT_VERSION,
            arch: self.model.arch.clone(),
            config: self.model.config.clone(),
            vocabulary: self.vocab.clone(),
            embeddings: Array::encode(self.embeddings.tensor()),
            params: self.model.params.iter().map(|(n, t)| (n.to_string(), Array::encode(t))).collect(),
            best_dev_score: self.best_dev_score,
            iteration: self.iteration,
        };
        serde_json::to_string(&file).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let corrupt = |e: serde_json::Error| Error::Checkpoint(format!("unreadable file: {e}"));
        let header: Header = serde_json::from_str(text).map_err(corrupt)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let f: File = serde_json::from_str(text).map_err(corrupt)?;
        for s in &f.arch.tasks {
            s.validate()?;
        }
        let mut params = ParamStore::new();
        for (name, a) in &f.params {
            params.insert(name.clone(), a.decode(name)?);
        }
        let model = MtlModel::from_parts(f.arch, f.config, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let embeddings = EmbeddingMatrix::from_tensor(f.embeddings.decode("embeddings")?)?;
        if embeddings.vocab_size() != f.vocabulary.len() || embeddings.dim() != model.config.embedding_dim {
            return Err(Error::Checkpoint("embedding matrix does not match vocabulary and config".into()));
        }
        Ok(Self {
            model,
            vocab: f.vocabulary,
            embeddings,
            best_dev_score: f.best_dev_score,
            iteration: f.iteration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    /// Errors unless the stored architecture is `kind`.
    pub fn expect_arch(self, kind: ArchKind) -> Result<Self> {
        if self.model.arch.kind != kind {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint holds {}, expected {kind}",
                self.model.arch.kind
            )));
        }
        Ok(self)
    }
}
