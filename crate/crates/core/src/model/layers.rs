//! Tape-level building blocks shared by the LESets and Deep Sets models.

use rand::Rng;

use crate::tensor::{uniform_init, ParamId, ParamStore, Tape, TensorError, Var};

use super::batch::EdgeList;

/// Fully connected layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let w = store.add(format!("{name}.weight"), uniform_init(rng, fan_in, fan_out, fan_in));
        let b = store.add(format!("{name}.bias"), uniform_init(rng, 1, fan_out, fan_in));
        Dense { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var, TensorError> {
        tape.affine(x, p[self.w.0], p[self.b.0])
    }
}

/// GraphConv: `h_m <- tanh(h_m W_root + b + (sum_n e_mn h_n) W_rel)`.
pub fn graph_conv(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeList,
    w_root: Var,
    w_rel: Var,
    bias: Var,
) -> Result<Var, TensorError> {
    let n = tape.value(h).nrows();
    let sent = tape.gather_rows(h, edges.src.clone())?;
    let agg = tape.scatter_add(sent, edges.dst.clone(), Some(edges.weight.clone()), n)?;
    let root = tape.affine(h, w_root, bias)?;
    let rel = tape.matmul(agg, w_rel)?;
    let pre = tape.add(root, rel)?;
    Ok(tape.tanh(pre))
}

/// CGConv with a gated residual update, followed by tanh:
/// `h_m <- tanh(h_m + sum_n sigmoid(z W_f + b_f) * softplus(z W_s + b_s))`
/// with `z = [h_m | h_n | e_mn]`.
pub fn cg_conv(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeList,
    gate: (Var, Var),
    core: (Var, Var),
) -> Result<Var, TensorError> {
    let n = tape.value(h).nrows();
    let h_dst = tape.gather_rows(h, edges.dst.clone())?;
    let h_src = tape.gather_rows(h, edges.src.clone())?;
    let e = tape.constant(edges.weight_column());
    let z = tape.concat_cols(&[h_dst, h_src, e])?;
    let g = tape.affine(z, gate.0, gate.1)?;
    let g = tape.sigmoid(g);
    let c = tape.affine(z, core.0, core.1)?;
    let c = tape.softplus(c);
    let msg = tape.mul(g, c)?;
    let agg = tape.scatter_add(msg, edges.dst.clone(), None, n)?;
    let pre = tape.add(h, agg)?;
    Ok(tape.tanh(pre))
}

/// Weighted sum of member rows into one row per set.
pub fn aggregate_ws(
    tape: &mut Tape,
    z: Var,
    graph_set: &std::rc::Rc<[usize]>,
    graph_weight: &std::rc::Rc<[f64]>,
    n_sets: usize,
) -> Result<Var, TensorError> {
    if n_sets == 0 {
        return Err(TensorError::Empty("aggregate_ws"));
    }
    tape.scatter_add(z, graph_set.clone(), Some(graph_weight.clone()), n_sets)
}

/// Single-head self-attention within each set of member rows:
/// `M' = softmax(Q K^T / sqrt(d_k)) V` with `Q = M W_q`, `K = M W_k`,
/// `V = M W_v`. Rows stay in their input order.
pub fn set_attention(
    tape: &mut Tape,
    z: Var,
    set_ranges: &[(usize, usize)],
    w_q: Var,
    w_k: Var,
    w_v: Var,
) -> Result<Var, TensorError> {
    if set_ranges.is_empty() {
        return Err(TensorError::Empty("set_attention"));
    }
    let q = tape.matmul(z, w_q)?;
    let k = tape.matmul(z, w_k)?;
    let v = tape.matmul(z, w_v)?;
    let d_k = tape.value(k).ncols() as f64;
    let inv = 1.0 / d_k.sqrt();
    let mut parts = Vec::with_capacity(set_ranges.len());
    for &(start, len) in set_ranges {
        if len == 0 {
            return Err(TensorError::Empty("set_attention"));
        }
        let qs = tape.slice_rows(q, start, len)?;
        let ks = tape.slice_rows(k, start, len)?;
        let vs = tape.slice_rows(v, start, len)?;
        let scores = tape.matmul_nt(qs, ks)?;
        let scores = tape.scale(scores, inv);
        let attn = tape.softmax_rows(scores)?;
        parts.push(tape.matmul(attn, vs)?);
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat_rows(&parts)
    }
}

/// `L - 1` tanh layers then a linear output layer.
pub fn mlp(tape: &mut Tape, p: &[Var], layers: &[Dense], x: Var) -> Result<Var, TensorError> {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        h = layer.forward(tape, p, h)?;
        if i + 1 < layers.len() {
            h = tape.tanh(h);
        }
    }
    Ok(h)
}
