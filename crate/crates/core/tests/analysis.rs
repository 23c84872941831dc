mod common;

use std::collections::HashMap;

use lesets::analysis::{
    criterion_hits, importance_report, per_hea_importance, sensitivity_sweep, sweep_split, HeaImportance,
};
use lesets::dataset::TargetColumn;
use lesets::model::{ConvOperator, Model, ModelConfig, ModelError, ModelSpec, Preset};
use lesets::repr::{build_graph_set, parse_composition};
use lesets::synth::{generate, SyntheticSpec};
use lesets::train::{mean_std, TrainConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POOL: [&str; 8] = ["Fe", "Co", "Ni", "Cr", "Mn", "V", "Ti", "Nb"];

fn random_dump(rng: &mut ChaCha8Rng, n: usize) -> Vec<HeaImportance> {
    (0..n)
        .map(|i| {
            let mut els = POOL.to_vec();
            els.shuffle(rng);
            let k = rng.random_range(1..=5);
            let scores = els[..k]
                .iter()
                .map(|e| {
                    // a few undefined scores and some ties
                    let v = match rng.random_range(0..10) {
                        0 => None,
                        1 => Some(1.0),
                        _ => Some(rng.random_range(0.1..5.0)),
                    };
                    (e.to_string(), v)
                })
                .collect();
            HeaImportance {
                model: "m".into(),
                composition: format!("alloy{i}"),
                scores,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn frequencies_match_a_recount(seed in any::<u64>(), n in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dump = random_dump(&mut rng, n);
        let universe: Vec<String> = POOL.iter().map(|s| s.to_string()).chain(["Zr".to_string()]).collect();
        let report = importance_report(&dump, &universe);
        prop_assert_eq!(report.frequencies.len(), universe.len());

        let mut count: HashMap<&str, [usize; 3]> = HashMap::new();
        for h in &dump {
            let defined: Vec<f64> = h.scores.iter().filter_map(|s| s.1).collect();
            let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
            let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (e, v) in &h.scores {
                let c = count.entry(e.as_str()).or_default();
                c[0] += 1;
                if let Some(v) = v {
                    if *v >= 3.0 * min {
                        c[1] += 1;
                        if *v == max {
                            c[2] += 1;
                        }
                    }
                }
            }
        }
        for f in &report.frequencies {
            let c = count.get(f.element.as_str()).copied().unwrap_or_default();
            prop_assert_eq!([f.appearances, f.criterion1, f.criterion2], c, "{}", f.element);
            prop_assert!(f.criterion2 <= f.criterion1 && f.criterion1 <= f.appearances);
        }
    }

    #[test]
    fn interaction_matches_group_means(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dump = random_dump(&mut rng, n);
        let report = importance_report(&dump, &[]);
        let m = &report.interaction;
        for (i, ei) in m.elements.iter().enumerate() {
            for (j, ej) in m.elements.iter().enumerate() {
                let (mut with, mut without) = (Vec::new(), Vec::new());
                for h in &dump {
                    let Some(v) = h.scores.iter().find(|s| &s.0 == ei).and_then(|s| s.1) else { continue };
                    if h.scores.iter().any(|s| &s.0 == ej) { with.push(v) } else { without.push(v) }
                }
                let expected = if i == j || with.is_empty() || without.is_empty() {
                    None
                } else {
                    Some(with.iter().sum::<f64>() / with.len() as f64 - without.iter().sum::<f64>() / without.len() as f64)
                };
                match (m.delta[i][j], expected) {
                    (None, None) => {}
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12, "{ei}/{ej}: {a} vs {b}"),
                    (a, b) => prop_assert!(false, "{ei}/{ej}: {a:?} vs {b:?}"),
                }
            }
        }
    }
}

#[test]
fn criterion_one_needs_a_threefold_gap() {
    let hits = criterion_hits(&[("Fe".into(), Some(2.0)), ("Co".into(), None)]);
    // 2 >= 3 * 2 is false
    assert_eq!(hits, vec![(false, false), (false, false)]);
    assert!(criterion_hits(&[]).is_empty());
}

fn sweep_model(seed: u64) -> Result<Model, ModelError> {
    let mut cfg = ModelConfig::preset(Preset::Youngs).with_seed(seed);
    cfg.use_att = false;
    cfg.hidden_dim = 8;
    cfg.n_conv_layers = 1;
    Model::from_spec(ModelSpec::LESets(cfg))
}

#[test]
fn sweep_statistics_are_exact() {
    let table = common::table();
    let sets = generate(
        &SyntheticSpec {
            n_rows: 80,
            seed: 2,
            ..SyntheticSpec::default()
        },
        &table,
    )
    .unwrap()
    .graph_sets(TargetColumn::YoungsModulus, &table)
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let res = sensitivity_sweep(&sets, &[1.0, 0.5, 0.5], sweep_model, &cfg, 3, 7, 1).unwrap();
    assert_eq!(res.points.iter().map(|p| p.fraction).collect::<Vec<_>>(), vec![0.5, 1.0]);
    assert_eq!(res.records.len(), 6);
    for p in &res.points {
        let (mean, std) = mean_std(&p.maes).unwrap();
        let s = p.mae.as_ref().unwrap();
        assert_eq!((s.mean, s.std), (mean, std));
        assert_eq!(s.standard_error, std / 3f64.sqrt());
        assert!(!p.degenerate);
        assert_eq!(p.n_failed, 0);
    }
    for r in &res.records {
        assert_eq!(r.seed, 7 + r.replicate as u64);
    }
    let again = sensitivity_sweep(&sets, &[0.5, 1.0], sweep_model, &cfg, 3, 7, 2).unwrap();
    assert_eq!(again.points, res.points);

    let single = sensitivity_sweep(&sets, &[1.0], sweep_model, &cfg, 1, 0, 1).unwrap();
    let p = &single.points[0];
    assert!(p.degenerate);
    assert_eq!(p.mae.as_ref().unwrap().std, 0.0);
    assert_eq!(p.mae.as_ref().unwrap().standard_error, 0.0);

    // an infeasible fraction is rejected before anything trains
    assert!(sensitivity_sweep(&sets, &[0.01, 1.0], sweep_model, &cfg, 2, 0, 1).is_err());
}

#[test]
fn sweep_fractions_nest_with_a_fixed_test_set() {
    let a = sweep_split(500, 0.25, 9).unwrap();
    let b = sweep_split(500, 1.0, 9).unwrap();
    assert_eq!(a.test, b.test);
    assert_eq!((a.train.len() + a.val.len()), 100);
    assert!(a.train.iter().chain(&a.val).all(|i| !b.test.contains(i)));
}

#[test]
fn importance_needs_an_attention_model() {
    let table = common::table();
    let sets = vec![build_graph_set(&parse_composition("FeCoNi").unwrap(), &table).unwrap()];
    let labels = vec!["FeCoNi".to_string()];
    let mut cfg = ModelConfig::preset(Preset::Bulk);
    assert!(!cfg.use_att);
    let ws = Model::from_spec(ModelSpec::LESets(cfg.clone())).unwrap();
    assert!(matches!(per_hea_importance(&ws, "ws", &sets, &labels), Err(ModelError::NoAttention)));
    cfg.use_att = true;
    cfg.conv_operator = ConvOperator::GraphConv;
    let att = Model::from_spec(ModelSpec::LESets(cfg)).unwrap();
    let per = per_hea_importance(&att, "att", &sets, &labels).unwrap();
    assert_eq!(per[0].scores.iter().map(|s| s.0.as_str()).collect::<Vec<_>>(), ["Fe", "Co", "Ni"]);
}
