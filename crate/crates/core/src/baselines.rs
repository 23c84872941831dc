//! Conventional regressors on tabular composition descriptors: ridge, lasso
//! and k-nearest neighbours.
//!
//! Every model standardizes its inputs with training statistics. Linear
//! models fit centered targets, so the intercept is the training mean and is
//! never penalized.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elemtable::{ElementTable, CONTINUOUS_COUNT};
use crate::repr::{Composition, ReprError};
use crate::train::{metrics, run_indexed, shuffled_indices, Metrics, TrainError};

pub const SUMMARY_DIM: usize = 2 * CONTINUOUS_COUNT;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty training set")]
    Empty,
    #[error("feature rows have inconsistent widths")]
    Ragged,
    #[error("{0} must be non-negative and finite")]
    BadLambda(&'static str),
    #[error("k = {k} is invalid for {n} training rows")]
    BadK { k: usize, n: usize },
    #[error("normal equations are singular; use lambda > 0")]
    Singular,
    #[error("lasso did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("input has {got} features, model expects {expected}")]
    Width { expected: usize, got: usize },
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Fraction-weighted mean of each raw continuous descriptor followed by the
/// fraction-weighted standard deviation of each.
pub fn summarize_composition(comp: &Composition, table: &ElementTable) -> Result<[f64; SUMMARY_DIM], ReprError> {
    let mut rows = Vec::with_capacity(comp.len());
    for (sym, w) in comp.entries() {
        rows.push((*w, table.get(sym)?.continuous()));
    }
    let mut out = [0.0; SUMMARY_DIM];
    for k in 0..CONTINUOUS_COUNT {
        let mean: f64 = rows.iter().map(|(w, d)| w * d[k]).sum();
        let var: f64 = rows.iter().map(|(w, d)| w * (d[k] - mean).powi(2)).sum();
        out[k] = mean;
        out[CONTINUOUS_COUNT + k] = var.sqrt();
    }
    Ok(out)
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize, BaselineError> {
    let d = x.first().ok_or(BaselineError::Empty)?.len();
    if x.iter().any(|r| r.len() != d) {
        return Err(BaselineError::Ragged);
    }
    Ok(d)
}

/// Column z-scoring with population statistics; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self, BaselineError> {
        let d = check_matrix(x)?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in x {
            for ((s, m), v) in std.iter_mut().zip(&mean).zip(r) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in std.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, BaselineError> {
        if x.len() != self.mean.len() {
            return Err(BaselineError::Width {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    fn transform_all(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, BaselineError> {
        x.iter().map(|r| self.transform(r)).collect()
    }
}

/// `y = intercept + coef · standardize(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub standardizer: Standardizer,
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, BaselineError> {
        let z = self.standardizer.transform(x)?;
        Ok(self.intercept + z.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn prepare(x: &[Vec<f64>], y: &[f64]) -> Result<(Standardizer, Vec<Vec<f64>>, f64), BaselineError> {
    if x.len() != y.len() {
        return Err(BaselineError::Ragged);
    }
    let st = Standardizer::fit(x)?;
    let z = st.transform_all(x)?;
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    Ok((st, z, ybar))
}

/// Solves `(ZᵀZ + λI) w = Zᵀ(y − ȳ)` by Cholesky factorization.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel, BaselineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BaselineError::BadLambda("ridge lambda"));
    }
    let (standardizer, z, ybar) = prepare(x, y)?;
    let d = z[0].len();
    let zm = DMatrix::from_fn(z.len(), d, |i, j| z[i][j]);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    let gram = zm.transpose() * &zm + DMatrix::identity(d, d) * lambda;
    let rhs = zm.transpose() * yc;
    let chol = gram.cholesky().ok_or(BaselineError::Singular)?;
    // Cholesky succeeds on numerically semidefinite matrices; reject those too
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if d > 0 && !(lo > hi * 1e-7) {
        return Err(BaselineError::Singular);
    }
    let coef = chol.solve(&rhs);
    Ok(LinearModel {
        standardizer,
        intercept: ybar,
        coef: coef.iter().copied().collect(),
    })
}

pub const LASSO_TOLERANCE: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `(1/2n)‖y − ȳ − Zw‖² + λ‖w‖₁`. Converged
/// once a full sweep moves no coordinate by more than [`LASSO_TOLERANCE`].
pub fn lasso_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel, BaselineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BaselineError::BadLambda("lasso lambda"));
    }
    let (standardizer, z, ybar) = prepare(x, y)?;
    let (n, d) = (z.len(), z[0].len());
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j] * r[j]).sum::<f64>() / nf).collect();
    let mut w = vec![0.0; d];
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_step = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho = z.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / nf + col_sq[j] * w[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let step = new - w[j];
            if step != 0.0 {
                for (e, r) in resid.iter_mut().zip(&z) {
                    *e -= step * r[j];
                }
                w[j] = new;
            }
            max_step = max_step.max(step.abs());
        }
        if max_step < LASSO_TOLERANCE {
            return Ok(LinearModel {
                standardizer,
                intercept: ybar,
                coef: w,
            });
        }
    }
    Err(BaselineError::NotConverged(LASSO_MAX_SWEEPS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    standardizer: Standardizer,
    train: Vec<Vec<f64>>,
    y: Vec<f64>,
    k: usize,
}

impl Knn {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize) -> Result<Self, BaselineError> {
        if x.len() != y.len() {
            return Err(BaselineError::Ragged);
        }
        if k == 0 || k > x.len() {
            return Err(BaselineError::BadK { k, n: x.len() });
        }
        let standardizer = Standardizer::fit(x)?;
        let train = standardizer.transform_all(x)?;
        Ok(Knn {
            standardizer,
            train,
            y: y.to_vec(),
            k,
        })
    }

    /// Mean target of the `k` nearest rows; equal distances go to the lower
    /// row index.
    pub fn predict(&self, x: &[f64]) -> Result<f64, BaselineError> {
        let q = self.standardizer.transform(x)?;
        let mut dist: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(dist[..self.k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ridge,
    Lasso,
    Knn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Ridge, BaselineKind::Lasso, BaselineKind::Knn];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Ridge => "ridge",
            BaselineKind::Lasso => "lasso",
            BaselineKind::Knn => "knn",
        }
    }

    /// Hyperparameter grid: lambda for the linear models, k for kNN.
    pub fn grid(self) -> Vec<f64> {
        match self {
            BaselineKind::Ridge => vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0],
            BaselineKind::Lasso => vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            BaselineKind::Knn => vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Linear(LinearModel),
    Knn(Knn),
}

impl Fitted {
    pub fn predict(&self, x: &[f64]) -> Result<f64, BaselineError> {
        match self {
            Fitted::Linear(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, BaselineError> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

pub fn fit(kind: BaselineKind, hyper: f64, x: &[Vec<f64>], y: &[f64]) -> Result<Fitted, BaselineError> {
    Ok(match kind {
        BaselineKind::Ridge => Fitted::Linear(ridge_fit(x, y, hyper)?),
        BaselineKind::Lasso => Fitted::Linear(lasso_fit(x, y, hyper)?),
        BaselineKind::Knn => Fitted::Knn(Knn::fit(x, y, hyper as usize)?),
    })
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Mean validation MAE of each grid value under k-fold cross-validation over
/// contiguous folds of `x`. Grid values that fail to fit on some fold score
/// infinity.
pub fn cross_validate(
    kind: BaselineKind,
    grid: &[f64],
    x: &[Vec<f64>],
    y: &[f64],
    folds: usize,
) -> Result<Vec<(f64, f64)>, BaselineError> {
    if folds < 2 || x.len() < folds {
        return Err(TrainError::DatasetTooSmall { got: x.len(), need: folds.max(2) }.into());
    }
    let n = x.len();
    let mut out = Vec::with_capacity(grid.len());
    for &h in grid {
        let mut total = 0.0;
        for f in 0..folds {
            let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
            let train: Vec<usize> = (0..lo).chain(hi..n).collect();
            let val: Vec<usize> = (lo..hi).collect();
            let score = fit(kind, h, &pick(x, &train), &pick(y, &train))
                .and_then(|m| m.predict_all(&pick(x, &val)))
                .ok()
                .and_then(|p| metrics(&pick(y, &val), &p).ok())
                .map_or(f64::INFINITY, |m| m.mae);
            total += score / folds as f64;
        }
        out.push((h, total));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReplicate {
    pub seed: u64,
    pub outcome: Result<(Metrics, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    /// `(hyperparameter, mean CV MAE)` over the grid.
    pub cv_scores: Vec<(f64, f64)>,
    pub chosen: f64,
    pub replicates: Vec<BaselineReplicate>,
}

pub const TUNING_FRACTION: f64 = 0.4;

/// Tunes on a seeded 40% subset by 5-fold CV, then fits and scores the
/// chosen setting on `n_replicates` random 2:1 train/test splits of the
/// remaining rows, seeded `base_seed + r`.
pub fn benchmark_baseline(
    kind: BaselineKind,
    x: &[Vec<f64>],
    y: &[f64],
    n_replicates: usize,
    base_seed: u64,
    threads: usize,
) -> Result<BaselineResult, BaselineError> {
    check_matrix(x)?;
    if x.len() != y.len() {
        return Err(BaselineError::Ragged);
    }
    let order = shuffled_indices(x.len(), base_seed);
    let n_tune = (TUNING_FRACTION * x.len() as f64).floor() as usize;
    let (tune, rest) = order.split_at(n_tune);
    if rest.len() < 3 {
        return Err(TrainError::DatasetTooSmall { got: x.len(), need: 5 }.into());
    }
    let grid = kind.grid();
    let cv_scores = cross_validate(kind, &grid, &pick(x, tune), &pick(y, tune), 5)?;
    let chosen = cv_scores
        .iter()
        .copied()
        .reduce(|best, c| if c.1 < best.1 { c } else { best })
        .map(|c| c.0)
        .expect("grid is non-empty");
    let rest = rest.to_vec();
    let run = |r: usize| {
        let seed = base_seed + r as u64;
        let start = Instant::now();
        let mut idx = rest.clone();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = idx.len() / 3;
        let (test, train) = idx.split_at(n_test);
        let outcome = fit(kind, chosen, &pick(x, train), &pick(y, train))
            .and_then(|m| m.predict_all(&pick(x, test)))
            .and_then(|p| Ok(metrics(&pick(y, test), &p)?))
            .map(|m| (m, start.elapsed().as_secs_f64()))
            .map_err(|e| e.to_string());
        BaselineReplicate { seed, outcome }
    };
    let replicates = run_indexed(n_replicates, threads, run)?;
    Ok(BaselineResult {
        kind,
        cv_scores,
        chosen,
        replicates,
    })
}
