use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{ParamStore, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// AdamW with decoupled weight decay.
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step_count: u64,
    first_moment: Vec<Array2<f64>>,
    second_moment: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Array2::zeros(p.raw_dim()))
                .collect()
        };
        AdamW {
            config,
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Array2<f64>]) -> Result<(), TensorError> {
        let c = self.config;
        if !(c.lr > 0.0 && c.lr.is_finite()) {
            return Err(TensorError::BadHyperparameter("lr must be positive"));
        }
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adamw_step",
                left: (params.len(), 1),
                right: (grads.len(), 1),
            });
        }
        for (p, g) in params.values().iter().zip(grads) {
            if p.dim() != g.dim() {
                return Err(TensorError::ShapeMismatch {
                    op: "adamw_step",
                    left: p.dim(),
                    right: g.dim(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TensorError::NonFinite("gradient"));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * *p);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_store(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", array![[p]]);
        s
    }

    #[test]
    fn first_step_from_zero_state() {
        let mut store = scalar_store(1.0);
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[array![[1.0]]]).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction
        let expected = 1.0 - 0.01 * (1.0 / (1.0 + 1e-8));
        assert!((store.values()[0][[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut store = scalar_store(0.731);
        let cfg = AdamWConfig {
            lr: 0.5,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        for _ in 0..5 {
            opt.step(&mut store, &[array![[0.0]]]).unwrap();
        }
        assert_eq!(store.values()[0][[0, 0]], 0.731);
    }

    #[test]
    fn decay_only_step() {
        let mut store = scalar_store(1.0);
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 1e-4,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[array![[0.0]]]).unwrap();
        assert!((store.values()[0][[0, 0]] - 0.999999).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut store = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        assert_eq!(
            opt.step(&mut store, &[array![[f64::INFINITY]]]),
            Err(TensorError::NonFinite("gradient"))
        );
        assert!(opt.step(&mut store, &[array![[1.0, 2.0]]]).is_err());
        opt.set_lr(0.0);
        assert!(opt.step(&mut store, &[array![[1.0]]]).is_err());
        assert_eq!(opt.step_count(), 0);
    }
}
