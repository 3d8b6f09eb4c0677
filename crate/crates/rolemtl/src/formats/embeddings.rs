//! Whitespace-separated text vectors, one `word v1 ... vd` line per word.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rolemtl_core::corpus::{EmbeddingMatrix, Vocabulary};

use crate::error::{Error, Result};

/// Reads vectors for the words of `vocab`. A word missing from the file
/// falls back to its lowercased form, then to the mean of every vector in
/// the file.
pub fn read_embeddings(reader: impl BufRead, source_name: &str, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingMatrix> {
    let wanted: BTreeSet<String> = vocab
        .tokens()
        .iter()
        .flat_map(|t| [t.clone(), t.to_lowercase()])
        .collect();
    let mut found: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::format(source_name, i + 1, format!("bad number for {word:?}: {e}")))?;
        if values.len() != dim {
            return Err(Error::format(source_name, i + 1, format!("{word:?} has {} values, expected {dim}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(source_name, i + 1, format!("non-finite value for {word:?}")));
        }
        for (s, v) in sum.iter_mut().zip(&values) {
            *s += v;
        }
        count += 1;
        if wanted.contains(word) && !found.contains_key(word) {
            found.insert(word.to_string(), values);
        }
    }
    if count == 0 {
        return Err(Error::format(source_name, 1, "no vectors"));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut resolved = BTreeMap::new();
    for t in vocab.tokens() {
        if let Some(v) = found.get(t).or_else(|| found.get(&t.to_lowercase())) {
            resolved.insert(t.clone(), v.clone());
        }
    }
    Ok(EmbeddingMatrix::assemble(vocab, dim, &resolved, &mean)?)
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(std::io::BufReader::new(f), &path.display().to_string(), vocab, dim)
}

/// The inverse of [`read_embeddings`] for a plain word → vector map.
pub fn write_embeddings(vectors: &BTreeMap<String, Vec<f64>>) -> String {
    let mut out = String::new();
    for (w, v) in vectors {
        out.push_str(w);
        for x in v {
            out.push(' ');
            // `{:?}` prints the shortest string that parses back exactly
            out.push_str(&format!("{x:?}"));
        }
        out.push('\n');
    }
    out
}
