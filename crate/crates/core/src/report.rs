//! Aligned text tables and JSON Lines files for amplification and network runs.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::amplifier::{AmplificationResult, LibraryRecord};
use crate::composition::Stage;
use crate::topology::MasRow;

/// One validated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpRow {
    pub name: String,
    pub validation_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_score: Option<f64>,
    pub depth: u32,
    pub stage: Stage,
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<u64>,
}

impl From<&LibraryRecord> for AmpRow {
    fn from(r: &LibraryRecord) -> Self {
        AmpRow {
            name: r.name.clone(),
            validation_score: r.score,
            test_score: None,
            depth: r.depth,
            stage: r.stage,
            tokens: r.tokens,
            time_ms: None,
        }
    }
}

/// One row per library entry, in creation order.
pub fn amp_rows(result: &AmplificationResult) -> Vec<AmpRow> {
    result
        .library
        .iter()
        .map(|e| AmpRow {
            name: e.name(),
            validation_score: e.score,
            test_score: None,
            depth: e.tree.layers(),
            stage: e.stage,
            tokens: e.ledger.total_tokens(),
            time_ms: Some(e.ledger.sim_time_ms),
        })
        .collect()
}

pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

pub fn render_amp_table(rows: &[AmpRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                format!("{:.4}", r.validation_score),
                opt(r.test_score.map(|s| format!("{s:.4}"))),
                r.depth.to_string(),
                r.stage.to_string(),
                r.tokens.to_string(),
                opt(r.time_ms),
            ]
        })
        .collect();
    render_table(&["name", "validation", "test", "depth", "stage", "tokens", "time_ms"], &cells)
}

pub fn render_mas_table(rows: &[MasRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.to_string(),
                r.num.to_string(),
                r.rounds.to_string(),
                format!("{:.4}", r.score),
                r.all_tokens.to_string(),
                r.sim_time_ms.to_string(),
            ]
        })
        .collect();
    render_table(&["kind", "NUM", "rounds", "score", "all_tokens", "sim_time_ms"], &cells)
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).expect("rows serialize") + "\n").collect()
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> std::io::Result<()> {
    std::fs::write(path, to_jsonl(rows))
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Rows of any machine-readable file this crate writes.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportFile {
    Amplification(Vec<AmpRow>),
    Mas(Vec<MasRow>),
}

impl ReportFile {
    /// Detects the row type from the first record's keys.
    pub fn parse(text: &str) -> Result<Self, String> {
        let Some(first) = text.lines().find(|l| !l.trim().is_empty()) else {
            return Ok(ReportFile::Amplification(Vec::new()));
        };
        let keys: serde_json::Value = serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        if keys.get("NUM").is_some() {
            Ok(ReportFile::Mas(parse_jsonl(text)?))
        } else if keys.get("created_step").is_some() {
            let records: Vec<LibraryRecord> = parse_jsonl(text)?;
            Ok(ReportFile::Amplification(records.iter().map(AmpRow::from).collect()))
        } else if keys.get("validation_score").is_some() {
            Ok(ReportFile::Amplification(parse_jsonl(text)?))
        } else {
            Err("not a library, candidate or network report file".into())
        }
    }

    pub fn render(&self) -> String {
        match self {
            ReportFile::Amplification(rows) => render_amp_table(rows),
            ReportFile::Mas(rows) => render_mas_table(rows),
        }
    }
}
