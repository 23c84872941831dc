//! The LESets network: `y = rho( sum_i w_i * agg(phi(x_i)) )`.
//!
//! * `phi`: message passing over one LE graph, mean-pool readout, then a
//!   `tanh` fully connected layer.
//! * aggregation: weighted sum of member representations, optionally after
//!   self-attention across the members of the set.
//! * `rho`: MLP with `tanh` hidden layers and a linear output.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::elemtable::FEATURE_DIM;
use crate::repr::{GraphSet, LEGraph};
use crate::tensor::{uniform_init, ParamId, ParamStore, Tape, TensorError, Var};

use super::batch::{EdgeList, GraphBatch};
use super::config::{ConvOperator, ModelConfig};
use super::layers::{aggregate_ws, cg_conv, graph_conv, mlp, set_attention, Dense};
use super::{ModelError, TargetScaler};

#[derive(Debug, Clone, Copy)]
enum ConvLayer {
    Graph {
        w_root: ParamId,
        w_rel: ParamId,
        bias: ParamId,
    },
    Cg {
        w_gate: ParamId,
        b_gate: ParamId,
        w_core: ParamId,
        b_core: ParamId,
    },
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    w_q: ParamId,
    w_k: ParamId,
    w_v: ParamId,
}

#[derive(Debug, Clone)]
pub struct LESetsModel {
    config: ModelConfig,
    params: ParamStore,
    convs: Vec<ConvLayer>,
    readout_fc: Dense,
    attention: Option<Attention>,
    rho: Vec<Dense>,
    pub scaler: TargetScaler,
}

/// Intermediate handles of one batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LESetsTrace {
    /// `[sets x 1]` network output (in scaled target units).
    pub output: Var,
    /// `[graphs x hidden]` member representations `z_i`.
    pub members: Var,
    /// `[graphs x hidden]` post-attention rows `z'_i`, when attention is on.
    pub attended: Option<Var>,
    /// `[sets x hidden]` aggregated representation `Z`.
    pub aggregated: Var,
}

impl LESetsModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let h = config.hidden_dim;
        let mut convs = Vec::with_capacity(config.n_conv_layers);
        let mut width = FEATURE_DIM;
        for l in 0..config.n_conv_layers {
            match config.conv_operator {
                ConvOperator::GraphConv => {
                    let w_root = params.add(
                        format!("conv{l}.w_root"),
                        uniform_init(&mut rng, width, h, width),
                    );
                    let w_rel = params.add(
                        format!("conv{l}.w_rel"),
                        uniform_init(&mut rng, width, h, width),
                    );
                    let bias = params.add(format!("conv{l}.bias"), uniform_init(&mut rng, 1, h, width));
                    convs.push(ConvLayer::Graph { w_root, w_rel, bias });
                    width = h;
                }
                ConvOperator::CGConv => {
                    // the gated update is residual, so the node width is kept
                    let z = 2 * width + 1;
                    let w_gate =
                        params.add(format!("conv{l}.w_gate"), uniform_init(&mut rng, z, width, z));
                    let b_gate =
                        params.add(format!("conv{l}.b_gate"), uniform_init(&mut rng, 1, width, z));
                    let w_core =
                        params.add(format!("conv{l}.w_core"), uniform_init(&mut rng, z, width, z));
                    let b_core =
                        params.add(format!("conv{l}.b_core"), uniform_init(&mut rng, 1, width, z));
                    convs.push(ConvLayer::Cg {
                        w_gate,
                        b_gate,
                        w_core,
                        b_core,
                    });
                }
            }
        }
        let readout_fc = Dense::new(&mut params, &mut rng, "readout_fc", width, h);
        let attention = config.use_att.then(|| Attention {
            w_q: params.add("att.w_q", uniform_init(&mut rng, h, h, h)),
            w_k: params.add("att.w_k", uniform_init(&mut rng, h, h, h)),
            w_v: params.add("att.w_v", uniform_init(&mut rng, h, h, h)),
        });
        let mut rho = Vec::with_capacity(config.n_fc_layers);
        for l in 0..config.n_fc_layers {
            let out = if l + 1 == config.n_fc_layers { 1 } else { h };
            rho.push(Dense::new(&mut params, &mut rng, &format!("rho{l}"), h, out));
        }
        Ok(LESetsModel {
            config,
            params,
            convs,
            readout_fc,
            attention,
            rho,
            scaler: TargetScaler::identity(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
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

    /// Message passing over every node of the batch.
    fn conv_stack(&self, tape: &mut Tape, p: &[Var], h: Var, edges: &EdgeList) -> Result<Var, TensorError> {
        let mut h = h;
        for layer in &self.convs {
            h = match *layer {
                ConvLayer::Graph { w_root, w_rel, bias } => {
                    graph_conv(tape, h, edges, p[w_root.0], p[w_rel.0], p[bias.0])?
                }
                ConvLayer::Cg {
                    w_gate,
                    b_gate,
                    w_core,
                    b_core,
                } => cg_conv(
                    tape,
                    h,
                    edges,
                    (p[w_gate.0], p[b_gate.0]),
                    (p[w_core.0], p[b_core.0]),
                )?,
            };
        }
        Ok(h)
    }

    /// `phi` for every graph of the batch: `[graphs x hidden]`.
    pub fn phi(&self, tape: &mut Tape, p: &[Var], batch: &GraphBatch) -> Result<Var, TensorError> {
        let x = tape.constant(batch.node_features.clone());
        let h = self.conv_stack(tape, p, x, &batch.edges)?;
        let pooled = tape.segment_mean(h, batch.node_graph.clone(), batch.n_graphs())?;
        let z = self.readout_fc.forward(tape, p, pooled)?;
        Ok(tape.tanh(z))
    }

    pub fn rho(&self, tape: &mut Tape, p: &[Var], z: Var) -> Result<Var, TensorError> {
        mlp(tape, p, &self.rho, z)
    }

    pub fn forward_trace(
        &self,
        tape: &mut Tape,
        p: &[Var],
        batch: &GraphBatch,
    ) -> Result<LESetsTrace, TensorError> {
        let members = self.phi(tape, p, batch)?;
        let attended = match self.attention {
            Some(a) => Some(set_attention(
                tape,
                members,
                &batch.set_ranges,
                p[a.w_q.0],
                p[a.w_k.0],
                p[a.w_v.0],
            )?),
            None => None,
        };
        let aggregated = aggregate_ws(
            tape,
            attended.unwrap_or(members),
            &batch.graph_set,
            &batch.graph_weight,
            batch.n_sets(),
        )?;
        let output = self.rho(tape, p, aggregated)?;
        Ok(LESetsTrace {
            output,
            members,
            attended,
            aggregated,
        })
    }

    /// Network output for one graph set, in scaled target units.
    pub fn forward_raw(&self, set: &GraphSet) -> Result<f64, ModelError> {
        let batch = GraphBatch::new(&[set])?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let trace = self.forward_trace(&mut tape, &p, &batch)?;
        Ok(tape.scalar(trace.output))
    }

    /// Prediction for one graph set, in target units.
    pub fn forward(&self, set: &GraphSet) -> Result<f64, ModelError> {
        Ok(self.scaler.unscale(self.forward_raw(set)?))
    }

    /// `phi` for a single LE graph.
    pub fn phi_forward(&self, graph: &LEGraph) -> Result<Array1<f64>, ModelError> {
        let set = GraphSet {
            members: vec![crate::repr::Member {
                graph: graph.clone(),
                weight: 1.0,
            }],
            target: None,
        };
        let batch = GraphBatch::new(&[&set])?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let z = self.phi(&mut tape, &p, &batch)?;
        Ok(tape.value(z).row(0).to_owned())
    }

    /// `rho` applied to one aggregated vector, in scaled target units.
    pub fn rho_forward(&self, z: &Array1<f64>) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let zv = tape.constant(z.clone().insert_axis(ndarray::Axis(0)));
        let y = self.rho(&mut tape, &p, zv)?;
        Ok(tape.scalar(y))
    }

    /// Attention-adjusted member rows `z'` for precomputed member vectors
    /// `zs` (`[n x hidden]`).
    pub fn attend(&self, zs: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        let a = self.attention.ok_or(ModelError::NoAttention)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let z = tape.constant(zs.clone());
        let out = set_attention(&mut tape, z, &[(0, zs.nrows())], p[a.w_q.0], p[a.w_k.0], p[a.w_v.0])?;
        Ok(tape.value(out).clone())
    }

    /// `Imp_i = |z'_i| / |z_i|` per member, keyed by center element.
    /// `None` marks a member whose pre-attention representation is zero.
    pub fn importance_scores(&self, set: &GraphSet) -> Result<Vec<(String, Option<f64>)>, ModelError> {
        if self.attention.is_none() {
            return Err(ModelError::NoAttention);
        }
        let batch = GraphBatch::new(&[set])?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let trace = self.forward_trace(&mut tape, &p, &batch)?;
        let attended = trace.attended.expect("attention enabled");
        let before = tape.l2_norm_rows(trace.members);
        let after = tape.l2_norm_rows(attended);
        let (before, after) = (tape.value(before), tape.value(after));
        Ok(set
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let b = before[[i, 0]];
                let imp = (b > 0.0).then(|| after[[i, 0]] / b).filter(|x| x.is_finite());
                (m.graph.center_symbol().to_string(), imp)
            })
            .collect())
    }

    pub fn uses_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn attention_value_weight(&self) -> Option<ParamId> {
        self.attention.map(|a| a.w_v)
    }

    pub fn attention_weights(&self) -> Option<(ParamId, ParamId, ParamId)> {
        self.attention.map(|a| (a.w_q, a.w_k, a.w_v))
    }
}
