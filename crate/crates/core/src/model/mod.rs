//! Set regressors over LE graph sets.

mod batch;
mod checkpoint;
mod config;
mod deepsets;
pub mod layers;
mod lesets;

pub use batch::{EdgeList, GraphBatch};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{ConvOperator, DeepSetsConfig, ModelConfig, ModelSpec, Preset};
pub use deepsets::DeepSetsModel;
pub use lesets::{LESetsModel, LESetsTrace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repr::{GraphSet, ReprError};
use crate::tensor::{ParamStore, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("node features have width {got}, expected {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("importance scores need a model with attention aggregation")]
    NoAttention,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Affine map between target units and the scaled units the network fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn identity() -> Self {
        TargetScaler { mean: 0.0, std: 1.0 }
    }

    /// z-score statistics of `values`; a zero spread falls back to 1.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::identity();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        TargetScaler {
            mean,
            std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn unscale(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// Any trainable model.
#[derive(Debug, Clone)]
pub enum Model {
    LESets(LESetsModel),
    DeepSets(DeepSetsModel),
}

/// Sets per forward pass in [`Model::predict`].
const PREDICT_CHUNK: usize = 256;

impl Model {
    pub fn from_spec(spec: ModelSpec) -> Result<Self, ModelError> {
        Ok(match spec {
            ModelSpec::LESets(c) => Model::LESets(LESetsModel::new(c)?),
            ModelSpec::DeepSets(c) => Model::DeepSets(DeepSetsModel::new(c)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::LESets(m) => ModelSpec::LESets(*m.config()),
            Model::DeepSets(m) => ModelSpec::DeepSets(*m.config()),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Model::LESets(m) => m.params(),
            Model::DeepSets(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::LESets(m) => m.params_mut(),
            Model::DeepSets(m) => m.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().scalar_count()
    }

    pub fn scaler(&self) -> TargetScaler {
        match self {
            Model::LESets(m) => m.scaler,
            Model::DeepSets(m) => m.scaler,
        }
    }

    pub fn set_scaler(&mut self, scaler: TargetScaler) {
        match self {
            Model::LESets(m) => m.scaler = scaler,
            Model::DeepSets(m) => m.scaler = scaler,
        }
    }

    pub fn as_lesets(&self) -> Option<&LESetsModel> {
        match self {
            Model::LESets(m) => Some(m),
            Model::DeepSets(_) => None,
        }
    }

    /// `[sets x 1]` network output in scaled units.
    pub fn forward_batch(&self, tape: &mut Tape, p: &[Var], batch: &GraphBatch) -> Result<Var, TensorError> {
        match self {
            Model::LESets(m) => Ok(m.forward_trace(tape, p, batch)?.output),
            Model::DeepSets(m) => m.forward_batch(tape, p, batch),
        }
    }

    /// Predictions in target units.
    pub fn predict(&self, sets: &[GraphSet]) -> Result<Vec<f64>, ModelError> {
        let scaler = self.scaler();
        let mut out = Vec::with_capacity(sets.len());
        for chunk in sets.chunks(PREDICT_CHUNK) {
            let refs: Vec<&GraphSet> = chunk.iter().collect();
            let batch = GraphBatch::new(&refs)?;
            let mut tape = Tape::new();
            let p = self.params().bind_frozen(&mut tape);
            let y = self.forward_batch(&mut tape, &p, &batch)?;
            out.extend(tape.value(y).iter().map(|&v| scaler.unscale(v)));
        }
        Ok(out)
    }
}
