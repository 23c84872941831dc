#![allow(dead_code)]

use lesets::elemtable::ElementTable;
use lesets::model::{ConvOperator, ModelConfig};
use lesets::repr::{build_graph_set, Composition, GraphSet, Target, Unit};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn table() -> ElementTable {
    ElementTable::builtin()
}

/// Random composition of `k` distinct table elements with amounts in [0.05, 1).
pub fn random_composition<R: Rng>(rng: &mut R, table: &ElementTable, k: usize) -> Composition {
    let mut symbols: Vec<String> = table.rows().iter().map(|r| r.symbol.clone()).collect();
    symbols.shuffle(rng);
    let entries = symbols
        .into_iter()
        .take(k)
        .map(|s| (s, rng.random_range(0.05..1.0)))
        .collect();
    Composition::from_amounts(entries).unwrap()
}

pub fn random_set<R: Rng>(rng: &mut R, table: &ElementTable, min: usize, max: usize) -> GraphSet {
    let k = rng.random_range(min..=max);
    let target = Target {
        value: rng.random_range(-2.0..2.0),
        unit: Unit::Dimensionless,
    };
    build_graph_set(&random_composition(rng, table, k), table)
        .unwrap()
        .with_target(Some(target))
}

/// Small architectures for finite-difference checks.
pub fn small_config(op: ConvOperator, use_att: bool, seed: u64) -> ModelConfig {
    ModelConfig {
        conv_operator: op,
        n_conv_layers: 2,
        n_fc_layers: 2,
        hidden_dim: 5,
        use_att,
        seed,
    }
}
