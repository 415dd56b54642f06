//! JSON Lines validation/test datasets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::TaskKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationInstance {
    pub id: String,
    pub input: String,
    pub gold: String,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// Parses JSON Lines text. Blank lines are ignored; order is preserved.
pub fn parse_dataset(text: &str) -> Result<Vec<ValidationInstance>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst: ValidationInstance = serde_json::from_str(line)
            .map_err(|e| DatasetError::Malformed { line: line_no, message: e.to_string() })?;
        if inst.gold.is_empty() {
            return Err(DatasetError::Malformed { line: line_no, message: "empty `gold`".into() });
        }
        if !seen.insert(inst.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: inst.id });
        }
        out.push(inst);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ValidationInstance>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

pub fn dataset_to_jsonl(instances: &[ValidationInstance]) -> String {
    instances.iter().map(|inst| serde_json::to_string(inst).expect("instances serialize") + "\n").collect()
}

pub fn save_dataset(path: impl AsRef<Path>, instances: &[ValidationInstance]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_jsonl(instances))
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

/// input → gold, for installing as the environment's answer key.
pub fn gold_map(instances: &[ValidationInstance]) -> HashMap<String, String> {
    instances.iter().map(|i| (i.input.clone(), i.gold.clone())).collect()
}
