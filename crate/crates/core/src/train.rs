//! Experimental protocol: seeded splits, MSE training with AdamW, plateau
//! learning-rate halving, early stopping, metrics and replicate benchmarks.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GraphBatch, Model, ModelError, TargetScaler};
use crate::repr::GraphSet;
use crate::tensor::{AdamW, AdamWConfig, Tape, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset too small: {got} rows, need at least {need}")]
    DatasetTooSmall { got: usize, need: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("row {0} has no target value")]
    MissingTarget(usize),
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },
    #[error("R^2 is undefined: targets have zero variance")]
    UndefinedR2,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Train/validation/test proportions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// 3:1:1.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let ok = [self.train, self.val, self.test]
            .iter()
            .all(|r| r.is_finite() && *r >= 0.0)
            && self.train > 0.0
            && (self.train + self.val + self.test - 1.0).abs() <= 1e-12;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!(
                "split ratios {}:{}:{} must be non-negative and sum to 1",
                self.train, self.val, self.test
            )))
        }
    }
}

/// Row indices of each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffles, then cuts contiguous train/val/test blocks. Validation and test
/// sizes are floored; the remainder goes to training.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split, TrainError> {
    spec.validate()?;
    if n < 5 {
        return Err(TrainError::DatasetTooSmall { got: n, need: 5 });
    }
    let n_val = (spec.val * n as f64).floor() as usize;
    let n_test = (spec.test * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    let idx = shuffled_indices(n, spec.seed);
    Ok(Split {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    })
}

pub fn select<T: Clone>(data: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

pub fn split_dataset<T: Clone>(
    data: &[T],
    spec: &SplitSpec,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), TrainError> {
    let s = split_indices(data.len(), spec)?;
    Ok((select(data, &s.train), select(data, &s.val), select(data, &s.test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_halving_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Relative drop below the best validation loss that counts as progress.
    pub improvement_tolerance: f64,
    /// Mini-batch shuffling seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-3,
            lr_halving_patience: 10,
            early_stop_patience: 20,
            max_epochs: 500,
            batch_size: 64,
            weight_decay: 1e-4,
            improvement_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(TrainError::Config("initial_lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config("weight_decay must be non-negative".into()));
        }
        if !(self.improvement_tolerance >= 0.0) {
            return Err(TrainError::Config("improvement_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .get(self.best_epoch.checked_sub(1)?)
            .map(|e| e.val_loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
    pub n: usize,
}

/// MAE and coefficient of determination.
pub fn metrics(targets: &[f64], predictions: &[f64]) -> Result<Metrics, TrainError> {
    if targets.is_empty() || targets.len() != predictions.len() {
        return Err(TrainError::Config(format!(
            "metrics need equal non-empty inputs, got {} and {}",
            targets.len(),
            predictions.len()
        )));
    }
    let n = targets.len() as f64;
    let mae = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / n;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok(Metrics {
        mae,
        r2,
        n: targets.len(),
    })
}

pub fn targets_of(sets: &[GraphSet]) -> Result<Vec<f64>, TrainError> {
    sets.iter()
        .enumerate()
        .map(|(i, s)| s.target_value().ok_or(TrainError::MissingTarget(i)))
        .collect()
}

pub fn evaluate(model: &Model, test: &[GraphSet]) -> Result<Metrics, TrainError> {
    if test.is_empty() {
        return Err(TrainError::DatasetTooSmall { got: 0, need: 1 });
    }
    let y = targets_of(test)?;
    let p = model.predict(test)?;
    metrics(&y, &p)
}

const EVAL_CHUNK: usize = 256;

struct PreparedBatch {
    batch: GraphBatch,
    targets: Array2<f64>,
}

fn prepare(sets: &[&GraphSet], scaler: &TargetScaler) -> Result<PreparedBatch, TrainError> {
    let batch = GraphBatch::new(sets)?;
    let t: Vec<f64> = sets
        .iter()
        .map(|s| scaler.scale(s.target_value().expect("targets checked")))
        .collect();
    Ok(PreparedBatch {
        batch,
        targets: Array2::from_shape_vec((t.len(), 1), t).expect("column"),
    })
}

fn batch_mse(model: &Model, pb: &PreparedBatch) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let p = model.params().bind_frozen(&mut tape);
    let y = model.forward_batch(&mut tape, &p, &pb.batch)?;
    let loss = tape.mse_loss(y, pb.targets.clone())?;
    Ok(tape.scalar(loss))
}

/// Trains `model` in place and returns its learning curve. On return the
/// model holds the parameters of the epoch with the lowest validation loss.
pub fn train_model(
    model: &mut Model,
    train: &[GraphSet],
    val: &[GraphSet],
    cfg: &TrainConfig,
) -> Result<LearningCurve, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::DatasetTooSmall {
            got: train.len().min(val.len()),
            need: 1,
        });
    }
    let train_y = targets_of(train)?;
    targets_of(val)?;
    let scaler = TargetScaler::fit(&train_y);
    model.set_scaler(scaler);

    let val_refs: Vec<&GraphSet> = val.iter().collect();
    let val_batches = val_refs
        .chunks(EVAL_CHUNK)
        .map(|c| prepare(c, &scaler))
        .collect::<Result<Vec<_>, _>>()?;

    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.initial_lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        model.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = LearningCurve::default();
    let mut best_loss = f64::INFINITY;
    let mut best_params = model.params().clone();
    let mut stagnant = 0usize;
    let mut stagnant_since_lr = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr = opt.lr();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&GraphSet> = chunk.iter().map(|&i| &train[i]).collect();
            let pb = prepare(&refs, &scaler)?;
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let y = model.forward_batch(&mut tape, &bound, &pb.batch)?;
            let loss = tape.mse_loss(y, pb.targets)?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(TrainError::NonFinite {
                    what: "training loss",
                    epoch,
                });
            }
            let mut grads = tape.backward(loss)?;
            let grads = model.params().collect_grads(&bound, &mut grads);
            opt.step(model.params_mut(), &grads)?;
            loss_sum += lv * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let mut val_sum = 0.0;
        for pb in &val_batches {
            val_sum += batch_mse(model, pb)? * pb.targets.len() as f64;
        }
        let val_loss = val_sum / val.len() as f64;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite {
                what: "validation loss",
                epoch,
            });
        }
        curve.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });

        if val_loss < best_loss * (1.0 - cfg.improvement_tolerance) || best_loss.is_infinite() {
            best_loss = val_loss;
            best_params = model.params().clone();
            curve.best_epoch = epoch;
            stagnant = 0;
            stagnant_since_lr = 0;
        } else {
            stagnant += 1;
            stagnant_since_lr += 1;
        }
        if stagnant >= cfg.early_stop_patience {
            break;
        }
        if cfg.lr_halving_patience > 0 && stagnant_since_lr >= cfg.lr_halving_patience {
            opt.set_lr(opt.lr() * 0.5);
            stagnant_since_lr = 0;
        }
    }
    *model.params_mut() = best_params;
    Ok(curve)
}

/// Result of one split/train/evaluate cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub metrics: Metrics,
    pub epochs: usize,
    pub wall_time_s: f64,
    pub curve: LearningCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub seed: u64,
    /// A failed replicate keeps its error message.
    pub outcome: Result<ReplicateOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub n_replicates: usize,
    pub n_succeeded: usize,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
    pub r2_mean: Option<f64>,
    pub r2_std: Option<f64>,
    pub failed: Vec<FailedReplicate>,
}

/// Mean and sample standard deviation (`n - 1`); the deviation of a single
/// value is reported as 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

pub fn summarize(records: &[ReplicateRecord]) -> BenchmarkSummary {
    summarize_metrics(records.iter().map(|r| (r.seed, r.outcome.as_ref().map(|o| &o.metrics))))
}

/// Aggregates `(seed, metrics or error)` pairs; failures are listed, not
/// dropped.
pub fn summarize_metrics<'a, I>(items: I) -> BenchmarkSummary
where
    I: IntoIterator<Item = (u64, Result<&'a Metrics, &'a String>)>,
{
    let mut n = 0;
    let (mut maes, mut r2s, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for (seed, outcome) in items {
        n += 1;
        match outcome {
            Ok(m) => {
                maes.push(m.mae);
                r2s.extend(m.r2);
            }
            Err(e) => failed.push(FailedReplicate {
                seed,
                error: e.clone(),
            }),
        }
    }
    let (mae_mean, mae_std) = mean_std(&maes).unzip();
    let (r2_mean, r2_std) = mean_std(&r2s).unzip();
    BenchmarkSummary {
        n_replicates: n,
        n_succeeded: maes.len(),
        mae_mean,
        mae_std,
        r2_mean,
        r2_std,
        failed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub replicates: Vec<ReplicateRecord>,
    pub summary: BenchmarkSummary,
}

/// One replicate: split with `seed`, build a model with `seed`, train,
/// evaluate on the held-out test partition.
pub fn run_replicate<F>(
    sets: &[GraphSet],
    factory: &F,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Model, ReplicateOutcome), TrainError>
where
    F: Fn(u64) -> Result<Model, ModelError>,
{
    let start = Instant::now();
    let (train, val, test) = split_dataset(sets, &SplitSpec::standard(seed))?;
    let mut model = factory(seed)?;
    let cfg = TrainConfig { seed, ..*cfg };
    let curve = train_model(&mut model, &train, &val, &cfg)?;
    let metrics = evaluate(&model, &test)?;
    Ok((
        model,
        ReplicateOutcome {
            metrics,
            epochs: curve.len(),
            wall_time_s: start.elapsed().as_secs_f64(),
            curve,
        },
    ))
}

/// Runs `n_replicates` independent replicates with seeds
/// `base_seed..base_seed + n_replicates`. With `threads > 1` replicates run
/// concurrently; results are ordered by seed either way.
pub fn benchmark<F>(
    sets: &[GraphSet],
    factory: F,
    cfg: &TrainConfig,
    n_replicates: usize,
    base_seed: u64,
    threads: usize,
) -> Result<BenchmarkResult, TrainError>
where
    F: Fn(u64) -> Result<Model, ModelError> + Sync,
{
    targets_of(sets)?;
    let run = |i: usize| {
        let seed = base_seed + i as u64;
        ReplicateRecord {
            seed,
            outcome: run_replicate(sets, &factory, cfg, seed)
                .map(|(_, o)| o)
                .map_err(|e| e.to_string()),
        }
    };
    let replicates = run_indexed(n_replicates, threads, run)?;
    let summary = summarize(&replicates);
    Ok(BenchmarkResult {
        replicates,
        summary,
    })
}

/// Evaluates `job(0..n)` serially or on a private pool, preserving order.
pub fn run_indexed<T, J>(n: usize, threads: usize, job: J) -> Result<Vec<T>, TrainError>
where
    T: Send,
    J: Fn(usize) -> T + Sync,
{
    if threads <= 1 {
        return Ok((0..n).map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&job).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let s = split_indices(100, &SplitSpec::standard(3)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
        let s = split_indices(7086, &SplitSpec::standard(0)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4252, 1417, 1417));
        assert!(matches!(
            split_indices(4, &SplitSpec::standard(0)),
            Err(TrainError::DatasetTooSmall { .. })
        ));
    }

    #[test]
    fn splits_are_deterministic_disjoint_and_exhaustive() {
        for seed in 0..20 {
            let a = split_indices(37, &SplitSpec::standard(seed)).unwrap();
            let b = split_indices(37, &SplitSpec::standard(seed)).unwrap();
            assert_eq!(a, b);
            let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..37).collect::<Vec<_>>());
        }
        assert_ne!(
            split_indices(37, &SplitSpec::standard(1)).unwrap(),
            split_indices(37, &SplitSpec::standard(2)).unwrap()
        );
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.r2), (0.0, Some(1.0)));
        let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.r2, Some(0.0));
        let m = metrics(&[4.0, 4.0], &[1.0, 7.0]).unwrap();
        assert_eq!(m.r2, None);
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn train_config_validation() {
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            initial_lr: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
