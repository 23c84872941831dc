//! Synthetic alloy dataset with smooth, known composition-property maps.
//!
//! Targets are nonlinear functions of fraction-weighted moments of the
//! z-scored element descriptors, plus Gaussian noise scaled to 2% of the
//! clean target's spread.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetRow};
use crate::elemtable::{ElementTable, CONTINUOUS_COUNT};
use crate::repr::{parse_composition, Composition, ReprError};

pub const DEFAULT_POOL: [&str; 10] = ["Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Nb", "Mo"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub pool: Vec<String>,
    pub min_components: usize,
    pub max_components: usize,
    /// Noise standard deviation as a fraction of the clean target's std.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 2000,
            pool: DEFAULT_POOL.iter().map(|s| s.to_string()).collect(),
            min_components: 3,
            max_components: 5,
            noise_fraction: 0.02,
            seed: 0,
        }
    }
}

// descriptor indices within the continuous block
const MASS: usize = 0;
const RADIUS: usize = 1;
const EN: usize = 2;
const IE: usize = 3;
const VOLUME: usize = 5;

/// Fraction-weighted mean and variance of each z-scored descriptor.
fn moments(comp: &Composition, table: &ElementTable) -> Result<([f64; CONTINUOUS_COUNT], [f64; CONTINUOUS_COUNT]), ReprError> {
    let mut mean = [0.0; CONTINUOUS_COUNT];
    let mut sq = [0.0; CONTINUOUS_COUNT];
    for (sym, w) in comp.entries() {
        let z = table.schema().zscore(&table.get(sym)?.continuous());
        for k in 0..CONTINUOUS_COUNT {
            mean[k] += w * z[k];
            sq[k] += w * z[k] * z[k];
        }
    }
    let mut var = [0.0; CONTINUOUS_COUNT];
    for k in 0..CONTINUOUS_COUNT {
        var[k] = (sq[k] - mean[k] * mean[k]).max(0.0);
    }
    Ok((mean, var))
}

/// Noise-free `[youngs_modulus, bulk_modulus, rws]`.
pub fn clean_targets(comp: &Composition, table: &ElementTable) -> Result<[f64; 3], ReprError> {
    let (m, v) = moments(comp, table)?;
    let youngs = 200.0 + 40.0 * (m[IE] - 0.5 * m[RADIUS]).tanh() + 15.0 * m[EN] * m[EN] + 25.0 * v[RADIUS];
    let bulk = 150.0
        + 30.0 * (0.9 * m[EN] - 0.6 * m[VOLUME]).tanh()
        + 12.0 * m[RADIUS] * m[IE]
        + 8.0 * (1.3 * m[MASS]).sin()
        + 20.0 * v[EN];
    let rws = 1.45 + 0.05 * m[RADIUS] + 0.02 * (m[VOLUME] - m[EN]).tanh() + 0.03 * v[VOLUME];
    Ok([youngs, bulk, rws])
}

fn std_of(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn generate(spec: &SyntheticSpec, table: &ElementTable) -> Result<Dataset, ReprError> {
    if spec.pool.is_empty() || spec.min_components == 0 || spec.min_components > spec.max_components {
        return Err(ReprError::Empty);
    }
    let max_k = spec.max_components.min(spec.pool.len());
    let min_k = spec.min_components.min(max_k);
    for sym in &spec.pool {
        table.get(sym)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut comps = Vec::with_capacity(spec.n_rows);
    let mut texts = Vec::with_capacity(spec.n_rows);
    while comps.len() < spec.n_rows {
        let k = rng.random_range(min_k..=max_k);
        let mut pool: Vec<&String> = spec.pool.iter().collect();
        pool.shuffle(&mut rng);
        let text: String = pool[..k]
            .iter()
            .map(|s| format!("{s}{:.3}", rng.random_range(0.2..1.0)))
            .collect();
        // targets follow the composition as read back from the text
        comps.push(parse_composition(&text)?);
        texts.push(text);
    }
    let clean: Vec<[f64; 3]> = comps
        .iter()
        .map(|c| clean_targets(c, table))
        .collect::<Result<_, _>>()?;
    let mut noisy = clean.clone();
    for t in 0..3 {
        let col: Vec<f64> = clean.iter().map(|r| r[t]).collect();
        let sd = spec.noise_fraction * std_of(&col);
        if sd > 0.0 {
            let normal = Normal::new(0.0, sd).expect("finite positive std");
            for row in noisy.iter_mut() {
                row[t] += normal.sample(&mut rng);
            }
        }
    }
    let rows = texts
        .into_iter()
        .zip(comps)
        .zip(noisy)
        .map(|((composition_text, composition), y)| DatasetRow {
            composition_text,
            composition,
            youngs_modulus: Some(y[0]),
            bulk_modulus: Some(y[1]),
            rws: Some(y[2]),
        })
        .collect();
    Ok(Dataset { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let table = ElementTable::builtin();
        let spec = SyntheticSpec {
            n_rows: 200,
            ..Default::default()
        };
        let a = generate(&spec, &table).unwrap();
        let b = generate(&spec, &table).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        for r in &a.rows {
            assert!((3..=5).contains(&r.composition.len()));
            assert!(r.composition.symbols().all(|s| DEFAULT_POOL.contains(&s)));
        }
        let other = generate(&SyntheticSpec { seed: 1, ..spec }, &table).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn noise_is_two_percent_of_spread() {
        let table = ElementTable::builtin();
        let d = generate(&SyntheticSpec::default(), &table).unwrap();
        let clean: Vec<f64> = d
            .rows
            .iter()
            .map(|r| clean_targets(&r.composition, &table).unwrap()[1])
            .collect();
        let resid: Vec<f64> = d.rows.iter().zip(&clean).map(|(r, c)| r.bulk_modulus.unwrap() - c).collect();
        let ratio = std_of(&resid) / std_of(&clean);
        assert!((ratio - 0.02).abs() < 0.003, "{ratio}");
    }

    #[test]
    fn rejects_unknown_pool_element() {
        let spec = SyntheticSpec {
            pool: vec!["Fe".into(), "Xx".into()],
            min_components: 1,
            ..Default::default()
        };
        assert!(generate(&spec, &ElementTable::builtin()).is_err());
    }
}
