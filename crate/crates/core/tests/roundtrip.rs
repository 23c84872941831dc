mod common;

use std::path::PathBuf;

use lesets::config::{Overrides, RunConfig, RunConfigFile};
use lesets::dataset::{Dataset, TargetColumn};
use lesets::elemtable::{featurize_element, ElementTable};
use lesets::model::{Checkpoint, ConvOperator, DeepSetsConfig, Model, ModelSpec};
use lesets::repr::{parse_composition, GraphSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn graph_set_json_round_trips(seed in any::<u64>(), k in 1usize..=6) {
        let table = common::table();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = common::random_set(&mut rng, &table, k, k);
        let back = GraphSet::from_json(&set.to_json(), &table).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(back.to_json(), set.to_json());
    }

    #[test]
    fn composition_text_round_trips(seed in any::<u64>(), k in 1usize..=6) {
        let table = common::table();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comp = common::random_composition(&mut rng, &table, k);
        let text: String = comp.entries().iter().map(|(s, f)| format!("{s}{f}")).collect();
        let back = parse_composition(&text).unwrap();
        prop_assert_eq!(back.len(), comp.len());
        for ((s1, f1), (s2, f2)) in back.entries().iter().zip(comp.entries()) {
            prop_assert_eq!(s1, s2);
            prop_assert!((f1 - f2).abs() <= 1e-12);
        }
    }

    #[test]
    fn parser_never_panics(text in "\\PC{0,24}") {
        let _ = parse_composition(&text);
    }
}

fn specs() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for op in [ConvOperator::GraphConv, ConvOperator::CGConv] {
        for att in [false, true] {
            out.push(ModelSpec::LESets(common::small_config(op, att, 9)));
        }
    }
    out.push(ModelSpec::DeepSets(DeepSetsConfig {
        phi_layers: 2,
        n_fc_layers: 2,
        hidden_dim: 4,
        seed: 9,
    }));
    out
}

#[test]
fn checkpoints_reproduce_predictions_exactly() {
    let table = common::table();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sets: Vec<GraphSet> = (0..20).map(|_| common::random_set(&mut rng, &table, 1, 5)).collect();
    let dir = tempfile::tempdir().unwrap();
    for spec in specs() {
        let mut model = Model::from_spec(spec).unwrap();
        model.set_scaler(lesets::model::TargetScaler { mean: 3.5, std: 0.25 });
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_model(&model, &table.schema_hash()).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.schema_hash, table.schema_hash());
        let restored = loaded.to_model().unwrap();
        assert_eq!(restored.params().values(), model.params().values());
        assert_eq!(restored.predict(&sets).unwrap(), model.predict(&sets).unwrap());
    }
}

#[test]
fn checkpoint_rejects_tampering() {
    let model = Model::from_spec(specs()[1]).unwrap();
    let good = Checkpoint::from_model(&model, "h");
    let mut c = good.clone();
    c.params.pop();
    assert!(c.to_model().is_err());
    let mut c = good.clone();
    c.params[0].shape[0] += 1;
    assert!(c.to_model().is_err());
    let mut c = good.clone();
    c.params[0].values[0] = f64::NAN;
    assert!(c.to_model().is_err());
    let mut c = good.clone();
    c.version += 1;
    assert!(c.to_model().is_err());
    let mut c = good;
    c.target_scaler.std = 0.0;
    assert!(c.to_model().is_err());
}

#[test]
fn dataset_csv_round_trips() {
    let text = "composition,youngs_modulus,bulk_modulus,rws\nFeCoNi,210.5,,1.41\nCoCrFeMnNi,,150,\n";
    let d = Dataset::from_csv_str(text).unwrap();
    let mut out = Vec::new();
    d.write_csv(&mut out).unwrap();
    let again = Dataset::from_csv_str(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(again.rows, d.rows);
    assert_eq!(d.with_target(TargetColumn::BulkModulus).len(), 1);
}

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

// The bodies below mirror the fuzz targets.

#[test]
fn corpus_seeds_parse_without_panicking() {
    let table = ElementTable::builtin();
    for (_, b) in corpus("parse_composition") {
        if let Ok(c) = parse_composition(&String::from_utf8_lossy(&b)) {
            let total: f64 = c.entries().iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
    let mut tables = 0;
    for (_, b) in corpus("element_table") {
        if let Ok(t) = ElementTable::from_reader(&b[..]) {
            tables += 1;
            for row in t.rows() {
                assert!(featurize_element(&row.symbol, &t).unwrap().iter().all(|v| v.is_finite()));
            }
        }
    }
    assert!(tables > 0);
    for (_, b) in corpus("dataset_csv") {
        if let Ok(d) = Dataset::from_reader(&b[..]) {
            for t in TargetColumn::ALL {
                let _ = d.graph_sets(t, &table);
            }
        }
    }
    let mut sets = 0;
    for (_, b) in corpus("graph_set_json") {
        if let Ok(s) = GraphSet::from_json(&String::from_utf8_lossy(&b), &table) {
            sets += 1;
            GraphSet::from_json(&s.to_json(), &table).unwrap();
        }
    }
    assert!(sets > 0);
    let mut models = 0;
    for (_, b) in corpus("checkpoint_json") {
        if let Ok(c) = Checkpoint::from_json_str(&String::from_utf8_lossy(&b)) {
            models += c.to_model().is_ok() as usize;
        }
    }
    assert!(models > 0);
    let mut configs = 0;
    for (_, b) in corpus("run_config") {
        if let Ok(f) = RunConfigFile::from_toml_str(&String::from_utf8_lossy(&b)) {
            configs += RunConfig::resolve(f, Overrides::default()).is_ok() as usize;
        }
    }
    assert!(configs > 0);
}
