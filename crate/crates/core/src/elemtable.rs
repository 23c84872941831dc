//! Elemental descriptor table and node featurization.
//!
//! Each element becomes a fixed-width vector:
//! `[one-hot(period 3..=7) | one-hot(group 1..=18) | z-scored continuous descriptors]`.
//! The z-score statistics are computed once over the whole table, so the
//! featurization does not depend on how a dataset is later split.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Element table shipped with the crate.
pub const BUILTIN_TABLE_CSV: &str = include_str!("../data/elements.csv");

pub const CSV_HEADER: [&str; 9] = [
    "symbol",
    "period",
    "group",
    "atomic_mass",
    "covalent_radius",
    "electronegativity",
    "first_ionization_energy",
    "electron_affinity",
    "atomic_volume",
];

pub const MIN_PERIOD: u8 = 3;
pub const MAX_PERIOD: u8 = 7;
pub const MIN_GROUP: u8 = 1;
pub const MAX_GROUP: u8 = 18;

pub const PERIOD_ONEHOT_WIDTH: usize = (MAX_PERIOD - MIN_PERIOD + 1) as usize;
pub const GROUP_ONEHOT_WIDTH: usize = (MAX_GROUP - MIN_GROUP + 1) as usize;
pub const CONTINUOUS_COUNT: usize = 6;
pub const FEATURE_DIM: usize = PERIOD_ONEHOT_WIDTH + GROUP_ONEHOT_WIDTH + CONTINUOUS_COUNT;

/// Names of the continuous descriptors, in feature order.
pub const CONTINUOUS_NAMES: [&str; CONTINUOUS_COUNT] = [
    "atomic_mass",
    "covalent_radius",
    "electronegativity",
    "first_ionization_energy",
    "electron_affinity",
    "atomic_volume",
];

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("cannot read element table {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("empty table")]
    Empty,
    #[error("malformed element table: {0}")]
    Malformed(String),
    #[error("duplicate symbol {0}")]
    DuplicateSymbol(String),
    #[error("element {symbol}: period {period} outside [{MIN_PERIOD}, {MAX_PERIOD}]")]
    PeriodOutOfRange { symbol: String, period: i64 },
    #[error("element {symbol}: group {group} outside [{MIN_GROUP}, {MAX_GROUP}]")]
    GroupOutOfRange { symbol: String, group: i64 },
    #[error("element {symbol}: {field} = {value} is not allowed")]
    BadValue {
        symbol: String,
        field: &'static str,
        value: f64,
    },
    #[error("unknown element {0}")]
    UnknownElement(String),
}

/// Physical descriptors of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDescriptor {
    pub symbol: String,
    pub period: u8,
    pub group: u8,
    /// Dalton.
    pub atomic_mass: f64,
    /// Angstrom.
    pub covalent_radius: f64,
    /// Pauling scale.
    pub electronegativity: f64,
    /// eV.
    pub first_ionization_energy: f64,
    /// eV.
    pub electron_affinity: f64,
    /// cm^3/mol.
    pub atomic_volume: f64,
}

impl ElementDescriptor {
    pub fn continuous(&self) -> [f64; CONTINUOUS_COUNT] {
        [
            self.atomic_mass,
            self.covalent_radius,
            self.electronegativity,
            self.first_ionization_energy,
            self.electron_affinity,
            self.atomic_volume,
        ]
    }

    fn validate(&self, period: i64, group: i64) -> Result<(), TableError> {
        if !(MIN_PERIOD as i64..=MAX_PERIOD as i64).contains(&period) {
            return Err(TableError::PeriodOutOfRange {
                symbol: self.symbol.clone(),
                period,
            });
        }
        if !(MIN_GROUP as i64..=MAX_GROUP as i64).contains(&group) {
            return Err(TableError::GroupOutOfRange {
                symbol: self.symbol.clone(),
                group,
            });
        }
        for (field, value) in CONTINUOUS_NAMES.iter().zip(self.continuous()) {
            let must_be_positive = matches!(
                *field,
                "atomic_mass" | "covalent_radius" | "atomic_volume"
            );
            if !value.is_finite() || (must_be_positive && value <= 0.0) {
                return Err(TableError::BadValue {
                    symbol: self.symbol.clone(),
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Feature layout plus the z-score statistics of the continuous block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub period_onehot_width: usize,
    pub group_onehot_width: usize,
    pub continuous_count: usize,
    pub total_dim: usize,
    pub continuous_means: [f64; CONTINUOUS_COUNT],
    /// Population standard deviations; strictly positive.
    pub continuous_stds: [f64; CONTINUOUS_COUNT],
}

impl FeatureSchema {
    fn from_rows(rows: &[ElementDescriptor]) -> Self {
        let n = rows.len() as f64;
        let mut means = [0.0; CONTINUOUS_COUNT];
        for row in rows {
            for (m, x) in means.iter_mut().zip(row.continuous()) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = [0.0; CONTINUOUS_COUNT];
        for row in rows {
            for ((s, m), x) in stds.iter_mut().zip(&means).zip(row.continuous()) {
                *s += (x - m).powi(2);
            }
        }
        for s in stds.iter_mut() {
            *s = (*s / n).sqrt();
            // a column that is constant over the table carries no information
            if *s <= 0.0 || !s.is_finite() {
                *s = 1.0;
            }
        }
        FeatureSchema {
            period_onehot_width: PERIOD_ONEHOT_WIDTH,
            group_onehot_width: GROUP_ONEHOT_WIDTH,
            continuous_count: CONTINUOUS_COUNT,
            total_dim: FEATURE_DIM,
            continuous_means: means,
            continuous_stds: stds,
        }
    }

    pub fn zscore(&self, continuous: &[f64; CONTINUOUS_COUNT]) -> [f64; CONTINUOUS_COUNT] {
        let mut out = [0.0; CONTINUOUS_COUNT];
        for i in 0..CONTINUOUS_COUNT {
            out[i] = (continuous[i] - self.continuous_means[i]) / self.continuous_stds[i];
        }
        out
    }
}

/// Validated, immutable element table.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementTable {
    rows: Vec<ElementDescriptor>,
    index: HashMap<String, usize>,
    schema: FeatureSchema,
}

#[derive(Deserialize)]
struct RawRow {
    symbol: String,
    period: i64,
    group: i64,
    atomic_mass: f64,
    covalent_radius: f64,
    electronegativity: f64,
    first_ionization_energy: f64,
    electron_affinity: f64,
    atomic_volume: f64,
}

impl ElementTable {
    pub fn builtin() -> Self {
        Self::from_csv_str(BUILTIN_TABLE_CSV).expect("shipped element table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TableError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, TableError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| TableError::Malformed(e.to_string()))?
            .clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(TableError::Empty);
        }
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(TableError::Malformed(format!(
                "expected header `{}`",
                CSV_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in rdr.deserialize::<RawRow>() {
            let raw = record.map_err(|e| TableError::Malformed(e.to_string()))?;
            let row = ElementDescriptor {
                symbol: raw.symbol,
                period: raw.period.clamp(0, u8::MAX as i64) as u8,
                group: raw.group.clamp(0, u8::MAX as i64) as u8,
                atomic_mass: raw.atomic_mass,
                covalent_radius: raw.covalent_radius,
                electronegativity: raw.electronegativity,
                first_ionization_energy: raw.first_ionization_energy,
                electron_affinity: raw.electron_affinity,
                atomic_volume: raw.atomic_volume,
            };
            row.validate(raw.period, raw.group)?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<ElementDescriptor>) -> Result<Self, TableError> {
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.symbol.is_empty() {
                return Err(TableError::Malformed("empty symbol".into()));
            }
            row.validate(row.period as i64, row.group as i64)?;
            if index.insert(row.symbol.clone(), i).is_some() {
                return Err(TableError::DuplicateSymbol(row.symbol.clone()));
            }
        }
        let schema = FeatureSchema::from_rows(&rows);
        Ok(ElementTable {
            rows,
            index,
            schema,
        })
    }

    pub fn rows(&self) -> &[ElementDescriptor] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn get(&self, symbol: &str) -> Result<&ElementDescriptor, TableError> {
        self.index
            .get(symbol)
            .map(|&i| &self.rows[i])
            .ok_or_else(|| TableError::UnknownElement(symbol.to_string()))
    }

    /// Hash of every descriptor and the derived schema. Checkpoints store it
    /// so a model is never applied to features built from a different table.
    pub fn schema_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for row in &self.rows {
            hasher.update(
                format!(
                    "{}|{}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}\n",
                    row.symbol,
                    row.period,
                    row.group,
                    row.atomic_mass,
                    row.covalent_radius,
                    row.electronegativity,
                    row.first_ionization_energy,
                    row.electron_affinity,
                    row.atomic_volume
                )
                .as_bytes(),
            );
        }
        hasher.update(
            format!(
                "{}|{}|{}|{:?}|{:?}",
                self.schema.period_onehot_width,
                self.schema.group_onehot_width,
                self.schema.continuous_count,
                self.schema.continuous_means,
                self.schema.continuous_stds
            )
            .as_bytes(),
        );
        hex::encode(hasher.finalize())
    }
}

/// Node feature vector for one element.
pub fn featurize_element(
    symbol: &str,
    table: &ElementTable,
) -> Result<[f64; FEATURE_DIM], TableError> {
    let row = table.get(symbol)?;
    let schema = table.schema();
    let mut out = [0.0; FEATURE_DIM];
    out[(row.period - MIN_PERIOD) as usize] = 1.0;
    out[PERIOD_ONEHOT_WIDTH + (row.group - MIN_GROUP) as usize] = 1.0;
    let z = schema.zscore(&row.continuous());
    out[PERIOD_ONEHOT_WIDTH + GROUP_ONEHOT_WIDTH..].copy_from_slice(&z);
    Ok(out)
}
