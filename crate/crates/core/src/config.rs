//! Run configuration: a TOML file with `[data]`, `[model]`, `[train]` and
//! `[run]` sections, overlaid by command-line values.
//!
//! ```toml
//! [data]
//! path = "alloys.csv"
//! target = "bulk_modulus"
//!
//! [model]
//! preset = "bulk"
//! hidden_dim = 48
//!
//! [train]
//! max_epochs = 300
//!
//! [run]
//! seed = 7
//! replicates = 30
//! ```

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::dataset::TargetColumn;
use crate::model::{ConvOperator, ModelConfig, Preset};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub target: Option<TargetColumn>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub conv_operator: Option<String>,
    pub n_conv_layers: Option<usize>,
    pub n_fc_layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub use_att: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub initial_lr: Option<f64>,
    pub lr_halving_patience: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub improvement_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub replicates: Option<usize>,
    pub fractions: Option<Vec<f64>>,
    pub checkpoint: Option<PathBuf>,
}

/// The file as written; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}

/// Values given on the command line; these win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub target: Option<TargetColumn>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub replicates: Option<usize>,
    pub fractions: Option<Vec<f64>>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub target: Option<TargetColumn>,
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub replicates: usize,
    pub fractions: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
}

pub const DEFAULT_REPLICATES: usize = 30;
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

fn default_preset(target: Option<TargetColumn>) -> Preset {
    match target {
        Some(TargetColumn::YoungsModulus) => Preset::Youngs,
        Some(TargetColumn::Rws) => Preset::Rws,
        Some(TargetColumn::BulkModulus) | None => Preset::Bulk,
    }
}

impl RunConfig {
    /// Merges file and flags. Without an explicit preset, the one tuned for
    /// the chosen target is used.
    pub fn resolve(file: RunConfigFile, flags: Overrides) -> Result<Self, ConfigError> {
        let target = flags.target.or(file.data.target);
        let preset = match flags.preset.or(file.model.preset.clone()) {
            Some(name) => name.parse::<Preset>().map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => default_preset(target),
        };
        let mut model = ModelConfig::preset(preset);
        let m = &file.model;
        if let Some(op) = &m.conv_operator {
            model.conv_operator = op.parse::<ConvOperator>().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        model.n_conv_layers = m.n_conv_layers.unwrap_or(model.n_conv_layers);
        model.n_fc_layers = m.n_fc_layers.unwrap_or(model.n_fc_layers);
        model.hidden_dim = m.hidden_dim.unwrap_or(model.hidden_dim);
        model.use_att = m.use_att.unwrap_or(model.use_att);
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let d = TrainConfig::default();
        let t = &file.train;
        let train = TrainConfig {
            initial_lr: t.initial_lr.unwrap_or(d.initial_lr),
            lr_halving_patience: t.lr_halving_patience.unwrap_or(d.lr_halving_patience),
            early_stop_patience: t.early_stop_patience.unwrap_or(d.early_stop_patience),
            max_epochs: t.max_epochs.unwrap_or(d.max_epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            weight_decay: t.weight_decay.unwrap_or(d.weight_decay),
            improvement_tolerance: t.improvement_tolerance.unwrap_or(d.improvement_tolerance),
            seed: d.seed,
        };
        train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let r = file.run;
        let threads = flags.threads.or(r.threads).unwrap_or(1);
        if threads == 0 {
            return Err(ConfigError::Invalid("threads must be at least 1".into()));
        }
        let fractions = flags
            .fractions
            .or(r.fractions)
            .unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
        if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(ConfigError::Invalid("fractions must lie in (0, 1]".into()));
        }
        Ok(RunConfig {
            data: flags.data.or(file.data.path),
            target,
            preset,
            model,
            train,
            out: flags.out.or(r.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: flags.seed.or(r.seed).unwrap_or(0),
            threads,
            replicates: flags.replicates.or(r.replicates).unwrap_or(DEFAULT_REPLICATES),
            fractions,
            checkpoint: flags.checkpoint.or(r.checkpoint),
        })
    }
}
