//! Data-size sensitivity sweeps and attention-based interpretation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelError};
use crate::repr::GraphSet;
use crate::train::{evaluate, mean_std, select, shuffled_indices, train_model, Metrics, TrainConfig, TrainError};

/// Row indices of one sweep replicate: the last `floor(0.2 n)` rows of the
/// seeded permutation are the test set, the leading `floor(f |pool|)` rows of
/// the remaining pool are split 3:1 into train and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn sweep_split(n: usize, fraction: f64, seed: u64) -> Result<SweepSplit, TrainError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TrainError::Config(format!("fraction {fraction} is outside (0, 1]")));
    }
    let order = shuffled_indices(n, seed);
    let n_test = n / 5;
    let pool = n - n_test;
    let m = (fraction * pool as f64).floor() as usize;
    let n_val = m / 4;
    let n_train = m - n_val;
    if n_test < 1 || n_val < 1 || n_train < 2 {
        return Err(TrainError::Config(format!(
            "fraction {fraction} of {n} rows leaves {n_train} train / {n_val} validation / {n_test} test rows"
        )));
    }
    Ok(SweepSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..m].to_vec(),
        test: order[pool..].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRecord {
    pub fraction: f64,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
    /// `std / sqrt(n)`.
    pub standard_error: f64,
}

fn summary_stat(values: &[f64]) -> Option<SummaryStat> {
    mean_std(values).map(|(mean, std)| SummaryStat {
        mean,
        std,
        standard_error: std / (values.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub fraction: f64,
    pub maes: Vec<f64>,
    pub r2s: Vec<f64>,
    pub mae: Option<SummaryStat>,
    pub r2: Option<SummaryStat>,
    pub n_failed: usize,
    /// Fewer than two successful replicates: the spread is reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub records: Vec<SensitivityRecord>,
    pub points: Vec<SensitivityPoint>,
}

/// Trains `n_rep` replicates (seeds `base_seed + r`) at each fraction. The
/// fractions are sorted ascending and deduplicated; every one of them must
/// yield a valid split before any training starts.
pub fn sensitivity_sweep<F>(
    sets: &[GraphSet],
    fractions: &[f64],
    factory: F,
    cfg: &TrainConfig,
    n_rep: usize,
    base_seed: u64,
    threads: usize,
) -> Result<SensitivityResult, TrainError>
where
    F: Fn(u64) -> Result<Model, ModelError> + Sync,
{
    if fractions.is_empty() || n_rep == 0 {
        return Err(TrainError::Config("sweep needs at least one fraction and one replicate".into()));
    }
    let mut fr = fractions.to_vec();
    fr.sort_by(f64::total_cmp);
    fr.dedup();
    for &f in &fr {
        sweep_split(sets.len(), f, base_seed)?;
    }
    let jobs: Vec<(f64, usize)> = fr.iter().flat_map(|&f| (0..n_rep).map(move |r| (f, r))).collect();
    let run = |j: usize| {
        let (fraction, replicate) = jobs[j];
        let seed = base_seed + replicate as u64;
        let outcome = (|| {
            let s = sweep_split(sets.len(), fraction, seed)?;
            let mut model = factory(seed)?;
            let cfg = TrainConfig { seed, ..*cfg };
            train_model(&mut model, &select(sets, &s.train), &select(sets, &s.val), &cfg)?;
            evaluate(&model, &select(sets, &s.test))
        })();
        SensitivityRecord {
            fraction,
            replicate,
            seed,
            outcome: outcome.map_err(|e| e.to_string()),
        }
    };
    let records = crate::train::run_indexed(jobs.len(), threads, run)?;
    let points = fr
        .iter()
        .map(|&f| {
            let rs: Vec<&SensitivityRecord> = records.iter().filter(|r| r.fraction == f).collect();
            let ok: Vec<&Metrics> = rs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let maes: Vec<f64> = ok.iter().map(|m| m.mae).collect();
            let r2s: Vec<f64> = ok.iter().filter_map(|m| m.r2).collect();
            SensitivityPoint {
                fraction: f,
                mae: summary_stat(&maes),
                r2: summary_stat(&r2s),
                degenerate: maes.len() < 2,
                n_failed: rs.len() - ok.len(),
                maes,
                r2s,
            }
        })
        .collect();
    Ok(SensitivityResult { records, points })
}

/// Imp scores of one alloy under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaImportance {
    pub model: String,
    pub composition: String,
    pub scores: Vec<(String, Option<f64>)>,
}

pub fn per_hea_importance(
    model: &Model,
    model_label: &str,
    sets: &[GraphSet],
    labels: &[String],
) -> Result<Vec<HeaImportance>, ModelError> {
    let m = model.as_lesets().filter(|m| m.uses_attention()).ok_or(ModelError::NoAttention)?;
    sets.iter()
        .zip(labels)
        .map(|(s, label)| {
            Ok(HeaImportance {
                model: model_label.to_string(),
                composition: label.clone(),
                scores: m.importance_scores(s)?,
            })
        })
        .collect()
}

/// Per member, whether it meets criterion (1), `Imp >= 3 min Imp`, and
/// criterion (2), (1) plus having the largest Imp. Undefined scores meet
/// neither and do not enter the minimum.
pub fn criterion_hits(scores: &[(String, Option<f64>)]) -> Vec<(bool, bool)> {
    let defined: Vec<f64> = scores.iter().filter_map(|s| s.1).collect();
    let (Some(min), Some(max)) = (
        defined.iter().copied().reduce(f64::min),
        defined.iter().copied().reduce(f64::max),
    ) else {
        return vec![(false, false); scores.len()];
    };
    scores
        .iter()
        .map(|(_, imp)| match imp {
            Some(v) => {
                let c1 = *v >= 3.0 * min;
                (c1, c1 && *v == max)
            }
            None => (false, false),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementFrequency {
    pub element: String,
    pub appearances: usize,
    pub criterion1: usize,
    pub criterion2: usize,
}

/// `delta[i][j]`: mean Imp of `elements[i]` in alloys containing
/// `elements[j]` minus its mean Imp in alloys without it. Undefined when
/// either group is empty, and on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub elements: Vec<String>,
    pub delta: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub frequencies: Vec<ElementFrequency>,
    pub interaction: InteractionMatrix,
}

/// Builds frequency counts and the interaction matrix from a per-alloy dump.
/// Every element of `universe` gets a frequency row, including those that
/// never appear; elements outside `universe` are appended in first-seen order.
/// The matrix covers only elements that appear.
pub fn importance_report(per_hea: &[HeaImportance], universe: &[String]) -> ImportanceReport {
    let mut elements: Vec<String> = universe.to_vec();
    for h in per_hea {
        for (e, _) in &h.scores {
            if !elements.contains(e) {
                elements.push(e.clone());
            }
        }
    }
    let pos: BTreeMap<&str, usize> = elements.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    let mut freq: Vec<ElementFrequency> = elements
        .iter()
        .map(|e| ElementFrequency {
            element: e.clone(),
            appearances: 0,
            criterion1: 0,
            criterion2: 0,
        })
        .collect();
    for h in per_hea {
        for ((e, _), (c1, c2)) in h.scores.iter().zip(criterion_hits(&h.scores)) {
            let f = &mut freq[pos[e.as_str()]];
            f.appearances += 1;
            f.criterion1 += c1 as usize;
            f.criterion2 += c2 as usize;
        }
    }
    let seen: Vec<String> = freq.iter().filter(|f| f.appearances > 0).map(|f| f.element.clone()).collect();
    ImportanceReport {
        interaction: interaction_matrix(per_hea, &seen),
        frequencies: freq,
    }
}

pub fn interaction_matrix(per_hea: &[HeaImportance], elements: &[String]) -> InteractionMatrix {
    let d = elements.len();
    let pos: BTreeMap<&str, usize> = elements.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    // (sum, count) with and without the second element
    let mut with = vec![vec![(0.0, 0usize); d]; d];
    let mut without = vec![vec![(0.0, 0usize); d]; d];
    for h in per_hea {
        let present: Vec<bool> = {
            let mut p = vec![false; d];
            for (e, _) in &h.scores {
                if let Some(&i) = pos.get(e.as_str()) {
                    p[i] = true;
                }
            }
            p
        };
        for (e1, imp) in &h.scores {
            let (Some(&i), Some(v)) = (pos.get(e1.as_str()), imp) else {
                continue;
            };
            for j in 0..d {
                let cell = if present[j] { &mut with[i][j] } else { &mut without[i][j] };
                cell.0 += v;
                cell.1 += 1;
            }
        }
    }
    let delta = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let (a, b) = (with[i][j], without[i][j]);
                    (i != j && a.1 > 0 && b.1 > 0).then(|| a.0 / a.1 as f64 - b.0 / b.1 as f64)
                })
                .collect()
        })
        .collect();
    InteractionMatrix {
        elements: elements.to_vec(),
        delta,
    }
}

/// Paired bars of criterion (1) and (2) counts per element.
pub fn frequencies_svg(freq: &[ElementFrequency]) -> String {
    let w = 40.0 + 24.0 * freq.len() as f64;
    let h = 240.0;
    let top = freq.iter().map(|f| f.criterion1).max().unwrap_or(0).max(1) as f64;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#);
    for (i, f) in freq.iter().enumerate() {
        let x = 30.0 + 24.0 * i as f64;
        for (count, dx, color) in [(f.criterion1, 0.0, "#7a9cc6"), (f.criterion2, 10.0, "#c67a7a")] {
            let bh = 180.0 * count as f64 / top;
            let _ = write!(s, r#"<rect x="{}" y="{}" width="9" height="{bh}" fill="{color}"/>"#, x + dx, 200.0 - bh);
        }
        let _ = write!(s, r#"<text x="{}" y="215">{}</text>"#, x + 2.0, f.element);
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of the interaction matrix; undefined cells are grey.
pub fn interaction_svg(m: &InteractionMatrix) -> String {
    let d = m.elements.len();
    let cell = 20.0;
    let size = 40.0 + cell * d as f64;
    let top = m
        .delta
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="9">"#);
    for (i, e) in m.elements.iter().enumerate() {
        let p = 40.0 + cell * i as f64;
        let _ = write!(s, r#"<text x="2" y="{}">{e}</text><text x="{}" y="30">{e}</text>"#, p + 14.0, p + 2.0);
        for j in 0..d {
            let fill = match m.delta[i][j] {
                None => "#dddddd".to_string(),
                Some(v) => {
                    let t = (v / top).clamp(-1.0, 1.0);
                    let (r, b) = if t >= 0.0 { (255.0, 255.0 * (1.0 - t)) } else { (255.0 * (1.0 + t), 255.0) };
                    let g = 255.0 * (1.0 - t.abs());
                    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
                }
            };
            let _ = write!(s, r#"<rect x="{}" y="{p}" width="{cell}" height="{cell}" fill="{fill}"/>"#, 40.0 + cell * j as f64);
        }
    }
    s.push_str("</svg>\n");
    s
}
