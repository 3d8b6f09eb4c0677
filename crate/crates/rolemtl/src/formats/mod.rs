//! Everything read from or written to disk.

pub mod checkpoint;
pub mod embeddings;
pub mod orl;
pub mod predictions;
pub mod report;
pub mod srl;

use std::path::Path;

use rolemtl_core::corpus::RoleInstance;
use rolemtl_core::train::{LogRecord, TrainLog};

use crate::error::{read_to_string, Error, Result};

pub use checkpoint::Checkpoint;
pub use embeddings::{load_embeddings, read_embeddings, write_embeddings};
pub use orl::{parse_orl_json, write_orl_json};
pub use predictions::{read_predictions, write_predictions, PredictionRecord};
pub use srl::{parse_srl_columns, write_srl_columns};

/// SRL columns for `*.txt`/`*.conll`/anything else, opinion JSON for
/// `*.json`.
pub fn load_corpus(path: &Path) -> Result<Vec<RoleInstance>> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e == "json") {
        parse_orl_json(&text, &name)
    } else {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name.clone());
        let mut inst = parse_srl_columns(&text, &name)?;
        // documents without a #doc line are named after the file
        if !text.lines().any(|l| l.trim_start().starts_with("#doc ")) {
            inst = inst.into_iter().map(|i| rename_doc(i, &stem)).collect::<Result<_>>()?;
        }
        Ok(inst)
    }
}

fn rename_doc(i: RoleInstance, doc: &str) -> Result<RoleInstance> {
    let mut s = i.sentence().clone();
    s.doc_id = doc.to_string();
    Ok(RoleInstance::new(std::sync::Arc::new(s), i.task(), i.trigger(), i.roles().to_vec())?)
}

/// One JSON object per line.
pub fn trainlog_lines(log: &TrainLog) -> String {
    let mut out = String::new();
    for r in &log.records {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn record_line(r: &LogRecord) -> String {
    serde_json::to_string(r).expect("plain data")
}

pub fn parse_trainlog(text: &str) -> Result<TrainLog> {
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format("trainlog", i + 1, e.to_string())))
        .collect::<Result<_>>()?;
    Ok(TrainLog { records })
}
