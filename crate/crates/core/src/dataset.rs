//! Dataset CSV: `composition,youngs_modulus,bulk_modulus,rws`.
//!
//! Empty cells mean a missing target. Target columns may be absent
//! altogether (e.g. for inputs to `predict`); the composition column may not.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elemtable::ElementTable;
use crate::repr::{build_graph_set, parse_composition, Composition, GraphSet, ReprError, Target, Unit};

pub const DATASET_HEADER: [&str; 4] = ["composition", "youngs_modulus", "bulk_modulus", "rws"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("dataset has no `composition` column")]
    NoCompositionColumn,
    #[error("line {line}: {source}")]
    Row { line: u64, source: ReprError },
    #[error("line {line}: column {column}: `{value}` is not a finite number")]
    BadNumber {
        line: u64,
        column: &'static str,
        value: String,
    },
    #[error("unknown target column `{0}`")]
    UnknownTarget(String),
    #[error("row {row} ({composition}): {source}")]
    Featurize {
        row: usize,
        composition: String,
        source: ReprError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetColumn {
    YoungsModulus,
    BulkModulus,
    Rws,
}

impl TargetColumn {
    pub const ALL: [TargetColumn; 3] = [
        TargetColumn::YoungsModulus,
        TargetColumn::BulkModulus,
        TargetColumn::Rws,
    ];

    pub fn column(self) -> &'static str {
        match self {
            TargetColumn::YoungsModulus => "youngs_modulus",
            TargetColumn::BulkModulus => "bulk_modulus",
            TargetColumn::Rws => "rws",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            TargetColumn::YoungsModulus | TargetColumn::BulkModulus => Unit::Gpa,
            TargetColumn::Rws => Unit::Angstrom,
        }
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for TargetColumn {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetColumn::ALL
            .into_iter()
            .find(|t| t.column() == s)
            .ok_or_else(|| DatasetError::UnknownTarget(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub composition_text: String,
    pub composition: Composition,
    pub youngs_modulus: Option<f64>,
    pub bulk_modulus: Option<f64>,
    pub rws: Option<f64>,
}

impl DatasetRow {
    pub fn target(&self, column: TargetColumn) -> Option<f64> {
        match column {
            TargetColumn::YoungsModulus => self.youngs_modulus,
            TargetColumn::BulkModulus => self.bulk_modulus,
            TargetColumn::Rws => self.rws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

fn parse_cell(cell: Option<&str>, line: u64, column: &'static str) -> Result<Option<f64>, DatasetError> {
    match cell.map(str::trim) {
        None | Some("") => Ok(None),
        Some(text) => match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(DatasetError::BadNumber {
                line,
                column,
                value: text.to_string(),
            }),
        },
    }
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_reader(file)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DatasetError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| DatasetError::Malformed(e.to_string()))?
            .clone();
        let col = |name: &str| header.iter().position(|h| h.trim() == name);
        let comp_col = col("composition").ok_or(DatasetError::NoCompositionColumn)?;
        let cols = [col("youngs_modulus"), col("bulk_modulus"), col("rws")];
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| DatasetError::Malformed(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let text = record.get(comp_col).unwrap_or("").trim().to_string();
            let composition =
                parse_composition(&text).map_err(|source| DatasetError::Row { line, source })?;
            let cell = |i: usize| cols[i].and_then(|c| record.get(c));
            rows.push(DatasetRow {
                composition_text: text,
                composition,
                youngs_modulus: parse_cell(cell(0), line, "youngs_modulus")?,
                bulk_modulus: parse_cell(cell(1), line, "bulk_modulus")?,
                rws: parse_cell(cell(2), line, "rws")?,
            });
        }
        Ok(Dataset { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows that carry `target`.
    pub fn with_target(&self, target: TargetColumn) -> Vec<&DatasetRow> {
        self.rows.iter().filter(|r| r.target(target).is_some()).collect()
    }

    /// Graph sets of every row carrying `target`, with the target attached.
    pub fn graph_sets(&self, target: TargetColumn, table: &ElementTable) -> Result<Vec<GraphSet>, DatasetError> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.target(target).map(|v| (i, r, v)))
            .map(|(i, r, v)| {
                build_graph_set(&r.composition, table)
                    .map(|s| {
                        s.with_target(Some(Target {
                            value: v,
                            unit: target.unit(),
                        }))
                    })
                    .map_err(|source| DatasetError::Featurize {
                        row: i,
                        composition: r.composition_text.clone(),
                        source,
                    })
            })
            .collect()
    }

    /// Graph sets of every row, targets ignored.
    pub fn all_graph_sets(&self, table: &ElementTable) -> Result<Vec<GraphSet>, DatasetError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                build_graph_set(&r.composition, table).map_err(|source| DatasetError::Featurize {
                    row: i,
                    composition: r.composition_text.clone(),
                    source,
                })
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| DatasetError::Malformed(e.to_string());
        w.write_record(DATASET_HEADER).map_err(err)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.composition_text.clone(),
                fmt(r.youngs_modulus),
                fmt(r.bulk_modulus),
                fmt(r.rws),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| DatasetError::Malformed(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_missing_targets() {
        let text = "composition,youngs_modulus,bulk_modulus,rws\nFeCoCrNi,,180.5,1.38\nAl0.5TiV,95,,\n";
        let d = Dataset::from_csv_str(text).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.rows[0].youngs_modulus, None);
        assert_eq!(d.rows[0].bulk_modulus, Some(180.5));
        assert_eq!(d.rows[1].target(TargetColumn::YoungsModulus), Some(95.0));
        assert_eq!(d.with_target(TargetColumn::BulkModulus).len(), 1);
        let table = ElementTable::builtin();
        let sets = d.graph_sets(TargetColumn::Rws, &table).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].target.unwrap().unit, Unit::Angstrom);
    }

    #[test]
    fn composition_only_input() {
        let d = Dataset::from_csv_str("composition\nFeNi\nW\n").unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.with_target(TargetColumn::Rws).is_empty());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            Dataset::from_csv_str("formula,rws\nFe,1\n"),
            Err(DatasetError::NoCompositionColumn)
        ));
        assert!(matches!(
            Dataset::from_csv_str("composition,rws\nFe,abc\n"),
            Err(DatasetError::BadNumber { .. })
        ));
        assert!(matches!(
            Dataset::from_csv_str("composition,rws\nfe,1\n"),
            Err(DatasetError::Row { .. })
        ));
        let d = Dataset::from_csv_str("composition,rws\nFeXx,1\n").unwrap();
        assert!(matches!(
            d.graph_sets(TargetColumn::Rws, &ElementTable::builtin()),
            Err(DatasetError::Featurize { .. })
        ));
        assert!("hardness".parse::<TargetColumn>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "composition,youngs_modulus,bulk_modulus,rws\nFeCoCrNi,210.25,180.5,1.38\nW,,300,\n";
        let d = Dataset::from_csv_str(text).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
