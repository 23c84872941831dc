//! JSON checkpoint container: architecture, named weights, target scaling,
//! and the hash of the element table the features were built from.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ModelSpec, TargetScaler};

pub const CHECKPOINT_FORMAT: &str = "lesets-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub target_scaler: TargetScaler,
    pub schema_hash: String,
    pub seed: u64,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, schema_hash: &str) -> Self {
        let store = model.params();
        let params = store
            .names()
            .iter()
            .zip(store.values())
            .map(|(name, v)| NamedTensor {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                values: v.iter().copied().collect(),
            })
            .collect();
        let spec = model.spec();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: spec,
            target_scaler: model.scaler(),
            schema_hash: schema_hash.to_string(),
            seed: spec.seed(),
            params,
        }
    }

    /// Rebuilds the architecture and installs the stored weights. Every
    /// parameter must be present with its expected shape.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if !(self.target_scaler.mean.is_finite()
            && self.target_scaler.std.is_finite()
            && self.target_scaler.std > 0.0)
        {
            return Err(ModelError::Checkpoint("invalid target scaler".into()));
        }
        check_size(&self.model)?;
        let mut model = Model::from_spec(self.model)?;
        let store = model.params_mut();
        if store.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                store.len(),
                self.params.len()
            )));
        }
        for t in &self.params {
            let id = store
                .find(&t.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unexpected parameter {}", t.name)))?;
            let target = store.get_mut(id);
            if [target.nrows(), target.ncols()] != t.shape || t.values.len() != target.len() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    t.name,
                    t.shape,
                    target.dim()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Checkpoint(format!("parameter {} is not finite", t.name)));
            }
            *target = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.values.clone())
                .expect("length checked");
        }
        model.set_scaler(self.target_scaler);
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }
}

/// Refuses architectures too large to allocate from an untrusted file.
fn check_size(spec: &ModelSpec) -> Result<(), ModelError> {
    let (layers, hidden) = match spec {
        ModelSpec::LESets(c) => (c.n_conv_layers + c.n_fc_layers, c.hidden_dim),
        ModelSpec::DeepSets(c) => (c.phi_layers + c.n_fc_layers, c.hidden_dim),
    };
    if layers > 64 || hidden > 4096 {
        return Err(ModelError::Checkpoint(format!(
            "architecture too large ({layers} layers, hidden {hidden})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elemtable::ElementTable;
    use crate::model::{DeepSetsConfig, ModelConfig, Preset};
    use crate::repr::{build_graph_set, parse_composition};

    #[test]
    fn round_trip_is_bit_exact() {
        let table = ElementTable::builtin();
        let sets: Vec<_> = ["FeCoCrNi", "Al0.3Ti2V", "W"]
            .iter()
            .map(|f| build_graph_set(&parse_composition(f).unwrap(), &table).unwrap())
            .collect();
        for spec in [
            ModelSpec::LESets(ModelConfig::preset(Preset::Youngs).with_seed(3)),
            ModelSpec::LESets(ModelConfig::preset(Preset::Bulk).with_seed(4)),
            ModelSpec::DeepSets(DeepSetsConfig::default()),
        ] {
            let mut model = Model::from_spec(spec).unwrap();
            model.set_scaler(TargetScaler { mean: 101.3, std: 17.9 });
            let ck = Checkpoint::from_model(&model, &table.schema_hash());
            let back = Checkpoint::from_json_str(&ck.to_json()).unwrap();
            assert_eq!(back, ck);
            let loaded = back.to_model().unwrap();
            let a = model.predict(&sets).unwrap();
            let b = loaded.predict(&sets).unwrap();
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rejects_tampered_checkpoints() {
        let model = Model::from_spec(ModelSpec::DeepSets(DeepSetsConfig::default())).unwrap();
        let ck = Checkpoint::from_model(&model, "h");
        let mut bad = ck.clone();
        bad.params[0].shape = [1, 1];
        assert!(bad.to_model().is_err());
        let mut bad = ck.clone();
        bad.params.pop();
        assert!(bad.to_model().is_err());
        let mut bad = ck.clone();
        bad.version = 99;
        assert!(bad.to_model().is_err());
        assert!(Checkpoint::from_json_str("{}").is_err());
    }
}
