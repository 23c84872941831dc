//! CSV and JSON artifacts. Every CSV is read back after writing and checked
//! against its declared header and column types.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{ElementFrequency, HeaImportance, InteractionMatrix, SensitivityRecord};
use crate::baselines::BaselineReplicate;
use crate::train::{LearningCurve, ReplicateRecord};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path} failed its schema check: {reason}")]
    Schema { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Col {
    Text,
    /// Finite number, or empty for a missing value.
    Num,
    /// Finite number, or `NA` for an undefined value.
    NumOrNa,
}

pub const REPLICATES_HEADER: [&str; 5] = ["seed", "mae", "r2", "epochs", "wall_time_s"];
pub const LEARNING_CURVE_HEADER: [&str; 4] = ["epoch", "train_loss", "val_loss", "lr"];
pub const SENSITIVITY_HEADER: [&str; 4] = ["fraction", "replicate", "mae", "r2"];
pub const IMP_PER_HEA_HEADER: [&str; 4] = ["model", "composition", "element", "imp"];
pub const IMP_FREQUENCIES_HEADER: [&str; 5] = ["mode", "element", "appearances", "criterion1", "criterion2"];

fn io_err(path: &Path, e: impl ToString) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `rows` under `header`, then re-reads the file and validates it.
pub fn write_checked(path: &Path, header: &[String], kinds: &[Col], rows: &[Vec<String>]) -> Result<(), ReportError> {
    assert_eq!(header.len(), kinds.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    drop(w);
    check_csv(path, header, kinds, rows.len())
}

pub fn check_csv(path: &Path, header: &[String], kinds: &[Col], expected_rows: usize) -> Result<(), ReportError> {
    let schema = |reason: String| ReportError::Schema {
        path: path.display().to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let got = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    if got.iter().ne(header.iter().map(String::as_str)) {
        return Err(schema(format!("header {:?}", got.iter().collect::<Vec<_>>())));
    }
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        n += 1;
        for (cell, kind) in rec.iter().zip(kinds) {
            let ok = match kind {
                Col::Text => true,
                Col::Num => cell.is_empty() || cell.parse::<f64>().is_ok_and(f64::is_finite),
                Col::NumOrNa => cell == "NA" || cell.parse::<f64>().is_ok_and(f64::is_finite),
            };
            if !ok {
                return Err(schema(format!("row {n}: bad cell `{cell}`")));
            }
        }
    }
    if n != expected_rows {
        return Err(schema(format!("{n} rows, expected {expected_rows}")));
    }
    Ok(())
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// One row of `replicates.csv`; empty cells for failed replicates and for
/// fields a model does not have.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub seed: u64,
    pub mae: Option<f64>,
    pub r2: Option<f64>,
    pub epochs: Option<usize>,
    pub wall_time_s: Option<f64>,
}

impl ReplicateRow {
    /// Wall time is left empty unless `timing` is set, so untimed runs are
    /// byte-reproducible.
    pub fn from_record(r: &ReplicateRecord, timing: bool) -> Self {
        let ok = r.outcome.as_ref().ok();
        ReplicateRow {
            seed: r.seed,
            mae: ok.map(|o| o.metrics.mae),
            r2: ok.and_then(|o| o.metrics.r2),
            epochs: ok.map(|o| o.epochs),
            wall_time_s: ok.filter(|_| timing).map(|o| o.wall_time_s),
        }
    }

    pub fn from_baseline(r: &BaselineReplicate, timing: bool) -> Self {
        let ok = r.outcome.as_ref().ok();
        ReplicateRow {
            seed: r.seed,
            mae: ok.map(|o| o.0.mae),
            r2: ok.and_then(|o| o.0.r2),
            epochs: None,
            wall_time_s: ok.filter(|_| timing).map(|o| o.1),
        }
    }
}

pub fn write_replicates(path: &Path, rows: &[ReplicateRow]) -> Result<(), ReportError> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                num(r.mae),
                num(r.r2),
                r.epochs.map(|e| e.to_string()).unwrap_or_default(),
                num(r.wall_time_s),
            ]
        })
        .collect();
    write_checked(path, &owned(&REPLICATES_HEADER), &[Col::Num; 5], &body)
}

pub fn write_learning_curve(path: &Path, curve: &LearningCurve) -> Result<(), ReportError> {
    let body: Vec<Vec<String>> = curve
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.lr.to_string(),
            ]
        })
        .collect();
    write_checked(path, &owned(&LEARNING_CURVE_HEADER), &[Col::Num; 4], &body)
}

pub fn write_sensitivity(path: &Path, records: &[SensitivityRecord]) -> Result<(), ReportError> {
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let ok = r.outcome.as_ref().ok();
            vec![
                r.fraction.to_string(),
                r.replicate.to_string(),
                num(ok.map(|m| m.mae)),
                num(ok.and_then(|m| m.r2)),
            ]
        })
        .collect();
    write_checked(path, &owned(&SENSITIVITY_HEADER), &[Col::Num; 4], &body)
}

/// Long format, one row per alloy member. Undefined scores are `NA`.
pub fn write_imp_per_hea(path: &Path, per_hea: &[HeaImportance]) -> Result<(), ReportError> {
    let body: Vec<Vec<String>> = per_hea
        .iter()
        .flat_map(|h| {
            h.scores.iter().map(move |(e, imp)| {
                vec![
                    h.model.clone(),
                    h.composition.clone(),
                    e.clone(),
                    imp.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                ]
            })
        })
        .collect();
    write_checked(
        path,
        &owned(&IMP_PER_HEA_HEADER),
        &[Col::Text, Col::Text, Col::Text, Col::NumOrNa],
        &body,
    )
}

/// `groups` pairs an aggregation label (e.g. `single`, `pooled`) with its
/// frequency table.
pub fn write_imp_frequencies(path: &Path, groups: &[(&str, &[ElementFrequency])]) -> Result<(), ReportError> {
    let body: Vec<Vec<String>> = groups
        .iter()
        .flat_map(|(mode, freq)| {
            freq.iter().map(move |f| {
                vec![
                    mode.to_string(),
                    f.element.clone(),
                    f.appearances.to_string(),
                    f.criterion1.to_string(),
                    f.criterion2.to_string(),
                ]
            })
        })
        .collect();
    write_checked(
        path,
        &owned(&IMP_FREQUENCIES_HEADER),
        &[Col::Text, Col::Text, Col::Num, Col::Num, Col::Num],
        &body,
    )
}

/// Square matrix with a leading `element` column; undefined entries are `NA`.
pub fn write_interaction_matrix(path: &Path, m: &InteractionMatrix) -> Result<(), ReportError> {
    let mut header = vec!["element".to_string()];
    header.extend(m.elements.iter().cloned());
    let mut kinds = vec![Col::Text];
    kinds.extend(std::iter::repeat_n(Col::NumOrNa, m.elements.len()));
    let body: Vec<Vec<String>> = m
        .elements
        .iter()
        .zip(&m.delta)
        .map(|(e, row)| {
            std::iter::once(e.clone())
                .chain(row.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())))
                .collect()
        })
        .collect();
    write_checked(path, &header, &kinds, &body)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
