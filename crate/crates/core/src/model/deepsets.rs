//! Deep Sets baseline: alloys as weighted sets of element feature vectors,
//! `y = rho( sum_e w_e * phi(feature(e)) )`. No graph structure is used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elemtable::{ElementTable, FEATURE_DIM};
use crate::repr::{build_graph_set, Composition, GraphSet};
use crate::tensor::{ParamStore, Tape, TensorError, Var};

use super::batch::GraphBatch;
use super::config::DeepSetsConfig;
use super::layers::{aggregate_ws, mlp, Dense};
use super::{ModelError, TargetScaler};

#[derive(Debug, Clone)]
pub struct DeepSetsModel {
    config: DeepSetsConfig,
    params: ParamStore,
    phi: Vec<Dense>,
    rho: Vec<Dense>,
    pub scaler: TargetScaler,
}

impl DeepSetsModel {
    pub fn new(config: DeepSetsConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let phi = (0..config.phi_layers)
            .map(|l| {
                let fan_in = if l == 0 { FEATURE_DIM } else { h };
                Dense::new(&mut params, &mut rng, &format!("phi{l}"), fan_in, h)
            })
            .collect();
        let rho = (0..config.n_fc_layers)
            .map(|l| {
                let out = if l + 1 == config.n_fc_layers { 1 } else { h };
                Dense::new(&mut params, &mut rng, &format!("rho{l}"), h, out)
            })
            .collect();
        Ok(DeepSetsModel {
            config,
            params,
            phi,
            rho,
            scaler: TargetScaler::identity(),
        })
    }

    pub fn config(&self) -> &DeepSetsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Uses only the center-node row of each LE graph, i.e. the element's
    /// own feature vector.
    pub fn forward_batch(&self, tape: &mut Tape, p: &[Var], batch: &GraphBatch) -> Result<Var, TensorError> {
        let x = tape.constant(batch.node_features.clone());
        let mut h = tape.gather_rows(x, batch.center_rows.clone())?;
        for layer in &self.phi {
            h = layer.forward(tape, p, h)?;
            h = tape.tanh(h);
        }
        let agg = aggregate_ws(tape, h, &batch.graph_set, &batch.graph_weight, batch.n_sets())?;
        mlp(tape, p, &self.rho, agg)
    }

    pub fn forward_set(&self, set: &GraphSet) -> Result<f64, ModelError> {
        let batch = GraphBatch::new(&[set])?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let y = self.forward_batch(&mut tape, &p, &batch)?;
        Ok(self.scaler.unscale(tape.scalar(y)))
    }

    pub fn forward(&self, comp: &Composition, table: &ElementTable) -> Result<f64, ModelError> {
        self.forward_set(&build_graph_set(comp, table)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elemtable::featurize_element;
    use crate::repr::parse_composition;
    use ndarray::{array, Array2};

    #[test]
    fn hand_set_weights_match_hand_evaluation() {
        let table = ElementTable::builtin();
        let cfg = DeepSetsConfig {
            phi_layers: 1,
            n_fc_layers: 2,
            hidden_dim: 2,
            seed: 0,
        };
        let mut m = DeepSetsModel::new(cfg).unwrap();
        // phi reads only two feature columns
        let mut w = Array2::zeros((FEATURE_DIM, 2));
        w[[23, 0]] = 0.5; // z-scored atomic mass
        w[[25, 1]] = -0.3; // z-scored electronegativity
        let names = m.params().names().to_vec();
        let set = |m: &mut DeepSetsModel, name: &str, v: Array2<f64>| {
            let id = m.params().find(name).unwrap();
            *m.params_mut().get_mut(id) = v;
        };
        assert_eq!(names, ["phi0.weight", "phi0.bias", "rho0.weight", "rho0.bias", "rho1.weight", "rho1.bias"]);
        set(&mut m, "phi0.weight", w);
        set(&mut m, "phi0.bias", array![[0.1, 0.0]]);
        set(&mut m, "rho0.weight", array![[1.0, 0.5], [-0.5, 2.0]]);
        set(&mut m, "rho0.bias", array![[0.0, 0.1]]);
        set(&mut m, "rho1.weight", array![[1.5], [-1.0]]);
        set(&mut m, "rho1.bias", array![[0.25]]);

        let comp = parse_composition("Fe3Ni").unwrap();
        let fe = featurize_element("Fe", &table).unwrap();
        let ni = featurize_element("Ni", &table).unwrap();
        let phi = |f: &[f64; FEATURE_DIM]| [(0.5 * f[23] + 0.1).tanh(), (-0.3 * f[25]).tanh()];
        let (pf, pn) = (phi(&fe), phi(&ni));
        let agg = [0.75 * pf[0] + 0.25 * pn[0], 0.75 * pf[1] + 0.25 * pn[1]];
        let h0 = (agg[0] * 1.0 + agg[1] * -0.5).tanh();
        let h1 = (agg[0] * 0.5 + agg[1] * 2.0 + 0.1).tanh();
        let expected = 1.5 * h0 - h1 + 0.25;
        let got = m.forward(&comp, &table).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn unary_and_permutation() {
        let table = ElementTable::builtin();
        let m = DeepSetsModel::new(DeepSetsConfig::default()).unwrap();
        let a = m.forward(&parse_composition("Fe2CoCrNi").unwrap(), &table).unwrap();
        let b = m.forward(&parse_composition("NiCrCoFe2").unwrap(), &table).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(m.forward(&parse_composition("W").unwrap(), &table).unwrap().is_finite());
        assert!(m.forward(&parse_composition("WXx").unwrap(), &table).is_err());
    }
}
