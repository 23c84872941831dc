use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesets::dataset::Dataset;
use lesets::elemtable::ElementTable;
use lesets::model::Checkpoint;

const TINY: &str = "[model]\nconv_operator = \"graphconv\"\nn_conv_layers = 1\nn_fc_layers = 2\nhidden_dim = 4\nuse_att = true\n\n[train]\nmax_epochs = 3\nbatch_size = 8\n";

fn lesets(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lesets"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lesets(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(rows: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let rows = rows.to_string();
    ok(dir.path(), &["synth", "--out", "data.csv", "--rows", &rows, "--seed", "5"]);
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let root = dir.path().to_path_buf();
    (dir, root)
}

#[test]
fn train_then_predict_matches_in_process_forward() {
    let (_guard, d) = workspace(40);
    ok(&d, &["train", "--data", "data.csv", "--target", "bulk_modulus", "--config", "tiny.toml", "--out", "run"]);
    for f in ["checkpoint.json", "learning_curve.csv", "metrics.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    ok(&d, &["predict", "--data", "data.csv", "--checkpoint", "run/checkpoint.json", "--out", "pred"]);

    let table = ElementTable::builtin();
    let model = Checkpoint::load(d.join("run/checkpoint.json")).unwrap().to_model().unwrap();
    let data = Dataset::load(d.join("data.csv")).unwrap();
    let expected = model.predict(&data.all_graph_sets(&table).unwrap()).unwrap();

    let mut rdr = csv::Reader::from_path(d.join("pred/predictions.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.iter().last(), Some("prediction"));
    let col = header.len() - 1;
    let got: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(got, expected);
}

#[test]
fn predict_refuses_a_different_element_table() {
    let (_guard, d) = workspace(30);
    ok(&d, &["train", "--data", "data.csv", "--target", "rws", "--config", "tiny.toml", "--out", "run"]);
    let mut table = lesets::elemtable::BUILTIN_TABLE_CSV.to_string();
    // perturb one descriptor value of the last row
    let last = table.trim_end().rsplit_once(',').unwrap().0.to_string();
    table = format!("{last},99\n");
    fs::write(d.join("table.csv"), &table).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lesets"))
        .current_dir(&d)
        .env("LESETS_ELEMENT_TABLE", d.join("table.csv"))
        .args(["predict", "--data", "data.csv", "--checkpoint", "run/checkpoint.json", "--out", "pred"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("element table"));
}

#[test]
fn featurize_writes_one_line_per_row() {
    let (_guard, d) = workspace(12);
    ok(&d, &["featurize", "--data", "data.csv", "--out", "feat"]);
    let lines = fs::read_to_string(d.join("feat/graph_sets.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 12);
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("feat/feature_schema.json")).unwrap()).unwrap();
    assert!(schema.is_object());
}

#[test]
fn benchmark_and_interpret_artifacts() {
    let (_guard, d) = workspace(40);
    let common = ["--data", "data.csv", "--target", "youngs_modulus", "--config", "tiny.toml"];
    let mut args = vec!["benchmark"];
    args.extend(common);
    args.extend(["--replicates", "2", "--out", "bench"]);
    ok(&d, &args);
    let reps = fs::read_to_string(d.join("bench/replicates.csv")).unwrap();
    assert_eq!(reps.lines().next(), Some("seed,mae,r2,epochs,wall_time_s"));
    assert_eq!(reps.lines().count(), 3);
    // wall time stays blank without --timing
    assert!(reps.lines().skip(1).all(|l| l.ends_with(',')));
    assert!(d.join("bench/learning_curves/seed_0.csv").exists());
    assert!(d.join("bench/summary.json").exists());

    let mut args = vec!["interpret"];
    args.extend(common);
    args.extend(["--out", "imp", "--svg"]);
    ok(&d, &args);
    for f in ["imp_per_hea.csv", "imp_frequencies.csv", "interaction_matrix.csv", "imp_frequencies.svg"] {
        assert!(d.join("imp").join(f).exists(), "{f}");
    }
    let per = fs::read_to_string(d.join("imp/imp_per_hea.csv")).unwrap();
    assert_eq!(per.lines().next(), Some("model,composition,element,imp"));
}

#[test]
fn interpret_rejects_a_weighted_sum_model() {
    let (_guard, d) = workspace(30);
    fs::write(d.join("ws.toml"), TINY.replace("use_att = true", "use_att = false")).unwrap();
    let out = lesets(
        &d,
        &["interpret", "--data", "data.csv", "--target", "bulk_modulus", "--config", "ws.toml", "--out", "imp"],
    );
    assert!(!out.status.success());
}

#[test]
fn sensitivity_and_baselines_run() {
    let (_guard, d) = workspace(60);
    ok(
        &d,
        &[
            "sensitivity", "--data", "data.csv", "--target", "rws", "--config", "tiny.toml", "--fractions", "0.5,1",
            "--replicates", "2", "--out", "sens",
        ],
    );
    let sens = fs::read_to_string(d.join("sens/sensitivity.csv")).unwrap();
    assert_eq!(sens.lines().count(), 5);
    ok(&d, &["baselines", "--data", "data.csv", "--target", "rws", "--replicates", "2", "--out", "base"]);
    for k in ["ridge", "lasso", "knn"] {
        assert!(d.join("base").join(k).join("replicates.csv").exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("base/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["baselines"].as_array().unwrap().len(), 3);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = lesets(dir.path(), &["train", "--data", "missing.csv", "--target", "rws"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    let out = lesets(dir.path(), &["train", "--target", "hardness"]);
    assert!(!out.status.success());
}
