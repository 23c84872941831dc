//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! Every value is an `Array2<f64>`; vectors are `1 x n` rows. Operations are
//! appended to a [`Tape`] and refer to their inputs by [`Var`] handle. Since
//! a handle can only name a node that already exists, the tape is always in
//! topological order, and [`Tape::backward`] is a single reverse sweep.

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use super::TensorError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    Add(Var, Var),
    /// `a (n x d) + b (1 x d)` broadcast over rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    /// `out[index[i]] += weight[i] * src[i]`
    ScatterAdd {
        src: Var,
        index: Rc<[usize]>,
        weights: Option<Rc<[f64]>>,
    },
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    L2NormRows(Var),
    Mse(Var, Rc<Array2<f64>>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. One tape per forward/backward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape(a: &Array2<f64>) -> (usize, usize) {
    a.dim()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Array2<f64>, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    fn dim(&self, v: Var) -> (usize, usize) {
        shape(&self.nodes[v.0].value)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.dim(a),
            right: self.dim(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.dim(a).1 != self.dim(b).0 {
            return Err(self.mismatch("matmul", a, b));
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push_op(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.dim(a).1 != self.dim(b).1 {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let value = self.value(a).dot(&self.value(b).t());
        Ok(self.push_op(value, Op::MatMulNt(a, b), &[a, b]))
    }

    /// Elementwise sum of equal shapes, or a row vector broadcast over rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (da, db) = (self.dim(a), self.dim(b));
        if da == db {
            let value = self.value(a) + self.value(b);
            Ok(self.push_op(value, Op::Add(a, b), &[a, b]))
        } else if db.0 == 1 && db.1 == da.1 {
            let value = self.value(a) + &self.value(b).row(0);
            Ok(self.push_op(value, Op::AddRow(a, b), &[a, b]))
        } else {
            Err(self.mismatch("add", a, b))
        }
    }

    /// `x * w + b` with `b` a `1 x out` row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, w)?;
        if self.dim(b) != (1, self.dim(xw).1) {
            return Err(self.mismatch("affine", xw, b));
        }
        self.add(xw, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push_op(value, Op::Scale(a, c), &[a])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.dim(a) != self.dim(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let value = self.value(a) * self.value(b);
        Ok(self.push_op(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_cols"))?;
        let rows = self.dim(first).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.dim(p).0 != rows) {
            return Err(self.mismatch("concat_cols", first, bad));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        Ok(self.push_op(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_rows"))?;
        let cols = self.dim(first).1;
        if let Some(&bad) = parts.iter().find(|&&p| self.dim(p).1 != cols) {
            return Err(self.mismatch("concat_rows", first, bad));
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts checked");
        Ok(self.push_op(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (rows, _) = self.dim(a);
        if start + len > rows {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                len: rows,
            });
        }
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        Ok(self.push_op(value, Op::SliceRows(a, start), &[a]))
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var, TensorError> {
        let (rows, cols) = self.dim(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: rows,
            });
        }
        let src = self.value(a);
        let mut value = Array2::zeros((index.len(), cols));
        for (mut out, &i) in value.outer_iter_mut().zip(index.iter()) {
            out.assign(&src.row(i));
        }
        Ok(self.push_op(value, Op::GatherRows(a, index), &[a]))
    }

    /// Row-wise segment sum: `out[index[i]] += weight[i] * src[i]`, with
    /// `out_rows` output rows. Unweighted when `weights` is `None`.
    pub fn scatter_add(
        &mut self,
        src: Var,
        index: Rc<[usize]>,
        weights: Option<Rc<[f64]>>,
        out_rows: usize,
    ) -> Result<Var, TensorError> {
        let (rows, cols) = self.dim(src);
        if index.len() != rows || weights.as_ref().is_some_and(|w| w.len() != rows) {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add",
                left: (rows, cols),
                right: (index.len(), 1),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "scatter_add",
                index: bad,
                len: out_rows,
            });
        }
        let s = self.value(src);
        let mut value = Array2::zeros((out_rows, cols));
        for (i, &dst) in index.iter().enumerate() {
            let w = weights.as_ref().map_or(1.0, |w| w[i]);
            value.row_mut(dst).scaled_add(w, &s.row(i));
        }
        Ok(self.push_op(
            value,
            Op::ScatterAdd {
                src,
                index,
                weights,
            },
            &[src],
        ))
    }

    /// Column-wise mean of each segment of rows; `segment[i]` names the
    /// output row of input row `i`.
    pub fn segment_mean(
        &mut self,
        src: Var,
        segment: Rc<[usize]>,
        segments: usize,
    ) -> Result<Var, TensorError> {
        let mut counts = vec![0usize; segments];
        for &s in segment.iter() {
            if s >= segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_mean",
                    index: s,
                    len: segments,
                });
            }
            counts[s] += 1;
        }
        if counts.contains(&0) {
            return Err(TensorError::Empty("segment_mean"));
        }
        let weights: Rc<[f64]> = segment.iter().map(|&s| 1.0 / counts[s] as f64).collect();
        self.scatter_add(src, segment, Some(weights), segments)
    }

    /// Column-wise mean over all rows, as a `1 x d` row.
    pub fn mean_pool(&mut self, src: Var) -> Result<Var, TensorError> {
        let rows = self.dim(src).0;
        self.segment_mean(src, vec![0; rows].into(), 1)
    }

    /// `sum_i w_i * rows_i`, as a `1 x d` row.
    pub fn weighted_sum(&mut self, src: Var, weights: &[f64]) -> Result<Var, TensorError> {
        let rows = self.dim(src).0;
        if rows == 0 {
            return Err(TensorError::Empty("weighted_sum"));
        }
        self.scatter_add(src, vec![0; rows].into(), Some(weights.into()), 1)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push_op(value, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push_op(value, Op::Sigmoid(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(softplus);
        self.push_op(value, Op::Softplus(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (rows, cols) = self.dim(a);
        if cols == 0 {
            return Err(TensorError::Empty("softmax_rows"));
        }
        let mut value = self.value(a).clone();
        for mut row in value.outer_iter_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        debug_assert_eq!(value.nrows(), rows);
        Ok(self.push_op(value, Op::SoftmaxRows(a), &[a]))
    }

    /// Euclidean norm of each row, as an `n x 1` column.
    pub fn l2_norm_rows(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .map_axis(Axis(1), |r| r.dot(&r).sqrt())
            .insert_axis(Axis(1));
        self.push_op(value, Op::L2NormRows(a), &[a])
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse_loss(&mut self, pred: Var, target: Array2<f64>) -> Result<Var, TensorError> {
        let dp = self.dim(pred);
        if dp != target.dim() {
            return Err(TensorError::ShapeMismatch {
                op: "mse_loss",
                left: dp,
                right: target.dim(),
            });
        }
        if target.is_empty() {
            return Err(TensorError::Empty("mse_loss"));
        }
        let diff = self.value(pred) - &target;
        let loss = diff.mapv(|d| d * d).mean().expect("non-empty");
        Ok(self.push_op(
            Array2::from_elem((1, 1), loss),
            Op::Mse(pred, Rc::new(target)),
            &[pred],
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "backward",
                index: loss.0,
                len: self.nodes.len(),
            });
        }
        let d = self.dim(loss);
        if d != (1, 1) {
            return Err(TensorError::NotScalar(d));
        }
        let lv = self.scalar(loss);
        if !lv.is_finite() {
            return Err(TensorError::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(&grads) {
            if !node.requires_grad {
                continue;
            }
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(TensorError::NonFinite("gradient"));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if rg(*a) {
                    self.accumulate(grads, *a, g.dot(&val(*b).t()));
                }
                if rg(*b) {
                    self.accumulate(grads, *b, val(*a).t().dot(g));
                }
            }
            Op::MatMulNt(a, b) => {
                if rg(*a) {
                    self.accumulate(grads, *a, g.dot(val(*b)));
                }
                if rg(*b) {
                    self.accumulate(grads, *b, g.t().dot(val(*a)));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if rg(*b) {
                    self.accumulate(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g * *c),
            Op::Mul(a, b) => {
                if rg(*a) {
                    self.accumulate(grads, *a, g * val(*b));
                }
                if rg(*b) {
                    self.accumulate(grads, *b, g * val(*a));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    if rg(*p) {
                        let part = g.slice(s![.., offset..offset + w]).to_owned();
                        self.accumulate(grads, *p, part);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = val(*p).nrows();
                    if rg(*p) {
                        let part = g.slice(s![offset..offset + h, ..]).to_owned();
                        self.accumulate(grads, *p, part);
                    }
                    offset += h;
                }
            }
            Op::SliceRows(a, start) => {
                if rg(*a) {
                    let mut full = Array2::zeros(val(*a).raw_dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                    self.accumulate(grads, *a, full);
                }
            }
            Op::GatherRows(a, index) => {
                if rg(*a) {
                    let mut full = Array2::zeros(val(*a).raw_dim());
                    for (row, &i) in g.outer_iter().zip(index.iter()) {
                        full.row_mut(i).scaled_add(1.0, &row);
                    }
                    self.accumulate(grads, *a, full);
                }
            }
            Op::ScatterAdd {
                src,
                index,
                weights,
            } => {
                if rg(*src) {
                    let mut gs = Array2::zeros(val(*src).raw_dim());
                    for (i, &dst) in index.iter().enumerate() {
                        let w = weights.as_ref().map_or(1.0, |w| w[i]);
                        gs.row_mut(i).scaled_add(w, &g.row(dst));
                    }
                    self.accumulate(grads, *src, gs);
                }
            }
            Op::Tanh(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= 1.0 - y * y);
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(&node.value)
                    .for_each(|d, &y| *d *= y * (1.0 - y));
                self.accumulate(grads, *a, ga);
            }
            Op::Softplus(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(val(*a))
                    .for_each(|d, &x| *d *= sigmoid(x));
                self.accumulate(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = g * y;
                for (mut grow, yrow) in ga.outer_iter_mut().zip(y.outer_iter()) {
                    let dot = grow.sum();
                    Zip::from(&mut grow).and(&yrow).for_each(|d, &yv| *d -= yv * dot);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::L2NormRows(a) => {
                let x = val(*a);
                let mut ga = Array2::zeros(x.raw_dim());
                for (i, mut row) in ga.outer_iter_mut().enumerate() {
                    let n = node.value[[i, 0]];
                    if n > 0.0 {
                        row.scaled_add(g[[i, 0]] / n, &x.row(i));
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Mse(p, target) => {
                let n = target.len() as f64;
                let ga = (val(*p) - &**target) * (2.0 * g[[0, 0]] / n);
                self.accumulate(grads, *p, ga);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn analytic_values() {
        let mut t = Tape::new();
        let z = t.constant(array![[0.0]]);
        let th = t.tanh(z);
        let sp = t.softplus(z);
        let sg = t.sigmoid(z);
        assert_eq!(t.scalar(th), 0.0);
        assert!((t.scalar(sp) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(t.scalar(sg), 0.5);
        let a = t.constant(array![[2.5, 2.5, 2.5]]);
        let sm = t.softmax_rows(a).unwrap();
        for &x in t.value(sm) {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = t.constant(array![[1.0, 2.0]]);
        let l = t.mse_loss(p, array![[1.0, 2.0]]).unwrap();
        assert_eq!(t.scalar(l), 0.0);
    }

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.param(array![[3.0]]);
        let y = t.mul(x, x).unwrap();
        let loss = t.mse_loss(y, array![[0.0]]).unwrap();
        // loss = x^4 so d/dx = 4 x^3; check x^2 through a separate tape
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap()[[0, 0]], 108.0);

        let mut t = Tape::new();
        let x = t.param(array![[3.0]]);
        let x2 = t.mul(x, x).unwrap();
        let g = t.backward(x2).unwrap();
        assert_eq!(g.get(x).unwrap()[[0, 0]], 6.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let w = t.param(array![[1.0, 2.0], [3.0, 4.0]]);
        let x = t.constant(array![[1.0, -1.0]]);
        let y = t.matmul(x, w).unwrap();
        let l = t.mse_loss(y, array![[0.0, 0.0]]).unwrap();
        let g = t.backward(l).unwrap();
        assert!(g.get(x).is_none());
        assert!(g.get(w).is_some());

        let mut t = Tape::new();
        let c = t.constant(array![[1.0]]);
        let l = t.mse_loss(c, array![[2.0]]).unwrap();
        let g = t.backward(l).unwrap();
        assert!(g.get(c).is_none());
    }

    #[test]
    fn errors() {
        let mut t = Tape::new();
        let a = t.param(Array2::zeros((2, 3)));
        let b = t.param(Array2::zeros((2, 3)));
        assert!(matches!(t.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(t.backward(a), Err(TensorError::NotScalar((2, 3)))));
        let e = t.param(Array2::zeros((1, 0)));
        assert!(matches!(t.softmax_rows(e), Err(TensorError::Empty(_))));
        let bad = t.param(array![[f64::NAN]]);
        let l = t.mse_loss(bad, array![[0.0]]).unwrap();
        assert!(matches!(t.backward(l), Err(TensorError::NonFinite(_))));
    }

    #[test]
    fn pooling_primitives() {
        let mut t = Tape::new();
        let x = t.constant(array![[1.0, 2.0], [3.0, 6.0]]);
        let m = t.mean_pool(x).unwrap();
        assert_eq!(t.value(m), &array![[2.0, 4.0]]);
        let w = t.weighted_sum(x, &[0.25, 0.75]).unwrap();
        assert_eq!(t.value(w), &array![[2.5, 5.0]]);
        let n = t.l2_norm_rows(x);
        assert_eq!(t.value(n)[[0, 0]], 5f64.sqrt());
    }
}
