//! `lesets` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lesets::analysis::{
    frequencies_svg, importance_report, interaction_svg, per_hea_importance, sensitivity_sweep, HeaImportance,
};
use lesets::baselines::{benchmark_baseline, summarize_composition, BaselineKind};
use lesets::config::{Overrides, RunConfig, RunConfigFile};
use lesets::dataset::{Dataset, TargetColumn};
use lesets::elemtable::ElementTable;
use lesets::model::{Checkpoint, DeepSetsConfig, Model, ModelSpec};
use lesets::report::{self, ReplicateRow};
use lesets::repr::GraphSet;
use lesets::synth::{generate, SyntheticSpec};
use lesets::train::{benchmark, evaluate, split_dataset, summarize_metrics, train_model, SplitSpec, TrainConfig};

const TABLE_ENV: &str = "LESETS_ELEMENT_TABLE";

#[derive(Parser)]
#[command(name = "lesets", version, about = "Graph-set regression of multi-element alloy properties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the graph set of every dataset row as JSON lines.
    Featurize(Common),
    /// Train one model on a 3:1:1 split and save a checkpoint.
    Train(TrainArgs),
    /// Append model predictions to a CSV.
    Predict(Common),
    /// Independent split/train/evaluate replicates.
    Benchmark(TrainArgs),
    /// Replicates over training-set fractions.
    Sensitivity(TrainArgs),
    /// Imp scores of an attention model over the dataset.
    Interpret(InterpretArgs),
    /// Ridge, lasso and kNN on composition summary descriptors.
    Baselines(Common),
    /// Generate a synthetic dataset with known composition-property maps.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated, e.g. `0.1,0.25,0.5,1`.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Record wall-clock time per replicate (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Lesets,
    Deepsets,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "lesets")]
    model: ModelKind,
}

#[derive(Args)]
struct InterpretArgs {
    #[command(flatten)]
    common: Common,
    /// Also render SVG charts.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize(c) => featurize(&c),
        Command::Train(a) => train(&a),
        Command::Predict(c) => predict(&c),
        Command::Benchmark(a) => bench(&a),
        Command::Sensitivity(a) => sensitivity(&a),
        Command::Interpret(a) => interpret(&a),
        Command::Baselines(c) => baselines(&c),
        Command::Synth(a) => synth(&a),
    }
}

fn element_table() -> Result<ElementTable> {
    match std::env::var_os(TABLE_ENV) {
        Some(p) => ElementTable::load(&p).with_context(|| format!("{TABLE_ENV}={}", Path::new(&p).display())),
        None => Ok(ElementTable::builtin()),
    }
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let file = match &c.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    let target = c.target.as_deref().map(str::parse::<TargetColumn>).transpose()?;
    let flags = Overrides {
        data: c.data.clone(),
        target,
        preset: c.preset.clone(),
        out: c.out.clone(),
        seed: c.seed,
        threads: c.threads,
        replicates: c.replicates,
        fractions: c.fractions.clone(),
        checkpoint: c.checkpoint.clone(),
    };
    Ok(RunConfig::resolve(file, flags)?)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data.as_ref().ok_or_else(|| anyhow!("no dataset given (--data)"))?;
    Ok(Dataset::load(path)?)
}

fn target_of(cfg: &RunConfig) -> Result<TargetColumn> {
    cfg.target.ok_or_else(|| anyhow!("no target given (--target youngs_modulus|bulk_modulus|rws)"))
}

fn labeled_sets(cfg: &RunConfig, table: &ElementTable) -> Result<(TargetColumn, Vec<GraphSet>, Vec<String>)> {
    let target = target_of(cfg)?;
    let data = load_data(cfg)?;
    let sets = data.graph_sets(target, table)?;
    ensure!(!sets.is_empty(), "dataset has no rows with a {target} value");
    let labels = data.with_target(target).iter().map(|r| r.composition_text.clone()).collect();
    Ok((target, sets, labels))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn model_spec(kind: ModelKind, cfg: &RunConfig, seed: u64) -> ModelSpec {
    match kind {
        ModelKind::Lesets => ModelSpec::LESets(cfg.model.with_seed(seed)),
        ModelKind::Deepsets => ModelSpec::DeepSets(DeepSetsConfig::default().with_seed(seed)),
    }
}

fn featurize(c: &Common) -> Result<()> {
    let cfg = resolve(c)?;
    let table = element_table()?;
    let data = load_data(&cfg)?;
    let sets = match cfg.target {
        Some(t) => data.graph_sets(t, &table)?,
        None => data.all_graph_sets(&table)?,
    };
    let path = out_dir(&cfg)?.join("graph_sets.jsonl");
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    for s in &sets {
        writeln!(w, "{}", s.to_json())?;
    }
    w.flush()?;
    report::write_json(&cfg.out.join("feature_schema.json"), &json!({
        "schema_hash": table.schema_hash(),
        "schema": table.schema(),
    }))?;
    println!("wrote {} graph sets to {}", sets.len(), path.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve(&a.common)?;
    let table = element_table()?;
    let (target, sets, _) = labeled_sets(&cfg, &table)?;
    let (tr, va, te) = split_dataset(&sets, &SplitSpec::standard(cfg.seed))?;
    let mut model = Model::from_spec(model_spec(a.model, &cfg, cfg.seed))?;
    let tcfg = TrainConfig { seed: cfg.seed, ..cfg.train };
    let curve = train_model(&mut model, &tr, &va, &tcfg)?;
    let metrics = evaluate(&model, &te)?;
    let out = out_dir(&cfg)?;
    let ck_path = cfg.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.json"));
    Checkpoint::from_model(&model, &table.schema_hash()).save(&ck_path)?;
    report::write_learning_curve(&out.join("learning_curve.csv"), &curve)?;
    report::write_json(&out.join("metrics.json"), &json!({
        "target": target,
        "model": model.spec(),
        "param_count": model.param_count(),
        "seed": cfg.seed,
        "epochs": curve.len(),
        "best_epoch": curve.best_epoch,
        "test": metrics,
    }))?;
    println!(
        "{target}: test MAE {:.4}, R2 {} after {} epochs; checkpoint {}",
        metrics.mae,
        metrics.r2.map_or("undefined".into(), |r| format!("{r:.4}")),
        curve.len(),
        ck_path.display()
    );
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig, table: &ElementTable) -> Result<Model> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| anyhow!("no checkpoint given (--checkpoint)"))?;
    let ck = Checkpoint::load(path)?;
    if ck.schema_hash != table.schema_hash() {
        bail!(
            "checkpoint {} was trained on element table {} but the current table is {}",
            path.display(),
            ck.schema_hash,
            table.schema_hash()
        );
    }
    Ok(ck.to_model()?)
}

fn predict(c: &Common) -> Result<()> {
    let cfg = resolve(c)?;
    let table = element_table()?;
    let model = load_checkpoint(&cfg, &table)?;
    let path = cfg.data.as_ref().ok_or_else(|| anyhow!("no input CSV given (--data)"))?;
    let data = Dataset::load(path)?;
    let preds = model.predict(&data.all_graph_sets(&table)?)?;

    let mut rdr = csv::Reader::from_path(path)?;
    let mut header = rdr.headers()?.clone();
    ensure!(header.iter().all(|h| h != "prediction"), "input already has a prediction column");
    header.push_field("prediction");
    let out = out_dir(&cfg)?.join("predictions.csv");
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(&header)?;
    for (rec, p) in rdr.records().zip(&preds) {
        let mut rec = rec?;
        rec.push_field(&p.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

fn bench(a: &TrainArgs) -> Result<()> {
    let cfg = resolve(&a.common)?;
    let table = element_table()?;
    let (target, sets, _) = labeled_sets(&cfg, &table)?;
    let kind = a.model;
    let result = benchmark(
        &sets,
        |seed| Model::from_spec(model_spec(kind, &cfg, seed)),
        &cfg.train,
        cfg.replicates,
        cfg.seed,
        cfg.threads,
    )?;
    let out = out_dir(&cfg)?;
    let rows: Vec<ReplicateRow> = result
        .replicates
        .iter()
        .map(|r| ReplicateRow::from_record(r, a.common.timing))
        .collect();
    report::write_replicates(&out.join("replicates.csv"), &rows)?;
    let curves = out.join("learning_curves");
    fs::create_dir_all(&curves)?;
    for r in &result.replicates {
        if let Ok(o) = &r.outcome {
            report::write_learning_curve(&curves.join(format!("seed_{}.csv", r.seed)), &o.curve)?;
        }
    }
    report::write_json(&out.join("summary.json"), &json!({
        "target": target,
        "model": model_spec(kind, &cfg, cfg.seed),
        "train": cfg.train,
        "base_seed": cfg.seed,
        "summary": result.summary,
    }))?;
    let s = &result.summary;
    println!(
        "{target}: {}/{} replicates, MAE {} +/- {}, R2 {} +/- {}",
        s.n_succeeded,
        s.n_replicates,
        fmt_opt(s.mae_mean),
        fmt_opt(s.mae_std),
        fmt_opt(s.r2_mean),
        fmt_opt(s.r2_std)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn sensitivity(a: &TrainArgs) -> Result<()> {
    let mut common = a.common.clone();
    common.replicates = common.replicates.or(Some(10));
    let cfg = resolve(&common)?;
    let table = element_table()?;
    let (target, sets, _) = labeled_sets(&cfg, &table)?;
    let kind = a.model;
    let result = sensitivity_sweep(
        &sets,
        &cfg.fractions,
        |seed| Model::from_spec(model_spec(kind, &cfg, seed)),
        &cfg.train,
        cfg.replicates,
        cfg.seed,
        cfg.threads,
    )?;
    let out = out_dir(&cfg)?;
    report::write_sensitivity(&out.join("sensitivity.csv"), &result.records)?;
    report::write_json(&out.join("sensitivity_summary.json"), &json!({
        "target": target,
        "model": model_spec(kind, &cfg, cfg.seed),
        "points": result.points,
    }))?;
    for p in &result.points {
        println!(
            "fraction {}: R2 {} (se {}){}",
            p.fraction,
            fmt_opt(p.r2.as_ref().map(|s| s.mean)),
            fmt_opt(p.r2.as_ref().map(|s| s.standard_error)),
            if p.degenerate { " [degenerate: <2 replicates]" } else { "" }
        );
    }
    Ok(())
}

fn interpret(a: &InterpretArgs) -> Result<()> {
    let mut common = a.common.clone();
    common.replicates = common.replicates.or(Some(1));
    let cfg = resolve(&common)?;
    ensure!(cfg.model.use_att || cfg.checkpoint.is_some(), "interpretation needs an attention model (e.g. --preset youngs)");
    let table = element_table()?;
    let (_, sets, labels) = labeled_sets(&cfg, &table)?;
    let models: Vec<(String, Model)> = match &cfg.checkpoint {
        Some(_) => vec![("checkpoint".into(), load_checkpoint(&cfg, &table)?)],
        None => (0..cfg.replicates as u64)
            .map(|r| {
                let seed = cfg.seed + r;
                let (tr, va, _) = split_dataset(&sets, &SplitSpec::standard(seed))?;
                let mut m = Model::from_spec(ModelSpec::LESets(cfg.model.with_seed(seed)))?;
                train_model(&mut m, &tr, &va, &TrainConfig { seed, ..cfg.train })?;
                Ok((format!("seed_{seed}"), m))
            })
            .collect::<Result<_>>()?,
    };
    let mut per_hea: Vec<HeaImportance> = Vec::new();
    for (label, m) in &models {
        per_hea.extend(per_hea_importance(m, label, &sets, &labels)?);
    }
    let universe: Vec<String> = table.rows().iter().map(|r| r.symbol.clone()).collect();
    let first: Vec<HeaImportance> = per_hea.iter().filter(|h| h.model == models[0].0).cloned().collect();
    let single = importance_report(&first, &universe);
    let pooled = importance_report(&per_hea, &universe);

    let out = out_dir(&cfg)?;
    report::write_imp_per_hea(&out.join("imp_per_hea.csv"), &per_hea)?;
    let mut groups = vec![("single", single.frequencies.as_slice())];
    if models.len() > 1 {
        groups.push(("pooled", pooled.frequencies.as_slice()));
    }
    report::write_imp_frequencies(&out.join("imp_frequencies.csv"), &groups)?;
    let matrix = if models.len() > 1 { &pooled.interaction } else { &single.interaction };
    report::write_interaction_matrix(&out.join("interaction_matrix.csv"), matrix)?;
    if a.svg {
        report::write_text(&out.join("imp_frequencies.svg"), &frequencies_svg(&single.frequencies))?;
        report::write_text(&out.join("interaction_matrix.svg"), &interaction_svg(matrix))?;
    }
    println!("scored {} alloys under {} model(s) into {}", sets.len(), models.len(), out.display());
    Ok(())
}

fn baselines(c: &Common) -> Result<()> {
    let cfg = resolve(c)?;
    let table = element_table()?;
    let target = target_of(&cfg)?;
    let data = load_data(&cfg)?;
    let rows = data.with_target(target);
    ensure!(!rows.is_empty(), "dataset has no rows with a {target} value");
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| summarize_composition(&r.composition, &table).map(|d| d.to_vec()))
        .collect::<Result<_, _>>()?;
    let y: Vec<f64> = rows.iter().map(|r| r.target(target).expect("filtered")).collect();
    let out = out_dir(&cfg)?;
    let mut summaries = Vec::new();
    for kind in BaselineKind::ALL {
        let res = benchmark_baseline(kind, &x, &y, cfg.replicates, cfg.seed, cfg.threads)?;
        let dir = out.join(kind.name());
        fs::create_dir_all(&dir)?;
        let rows: Vec<ReplicateRow> = res.replicates.iter().map(|r| ReplicateRow::from_baseline(r, c.timing)).collect();
        report::write_replicates(&dir.join("replicates.csv"), &rows)?;
        let summary = summarize_metrics(res.replicates.iter().map(|r| (r.seed, r.outcome.as_ref().map(|o| &o.0))));
        println!(
            "{}: chosen {}, MAE {} +/- {}, R2 {} +/- {}",
            kind.name(),
            res.chosen,
            fmt_opt(summary.mae_mean),
            fmt_opt(summary.mae_std),
            fmt_opt(summary.r2_mean),
            fmt_opt(summary.r2_std)
        );
        summaries.push(json!({
            "model": kind.name(),
            "cv_grid": res.cv_scores.iter().map(|(h, s)| json!({"value": h, "cv_mae": s})).collect::<Vec<_>>(),
            "chosen": res.chosen,
            "summary": summary,
        }));
    }
    report::write_json(&out.join("summary.json"), &json!({
        "target": target,
        "base_seed": cfg.seed,
        "not_implemented": ["gradient_boosting", "random_forest", "svm"],
        "baselines": summaries,
    }))?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let table = element_table()?;
    let spec = SyntheticSpec {
        n_rows: a.rows,
        seed: a.seed,
        ..Default::default()
    };
    let d = generate(&spec, &table)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    d.save(&a.out)?;
    println!("wrote {} rows to {}", d.len(), a.out.display());
    Ok(())
}
