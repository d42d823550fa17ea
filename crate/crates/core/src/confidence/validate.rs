use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelSpec;
use super::training::{design, TrainingCell};
use crate::error::{Error, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;
pub const LOCO_MIN_PER_CLASS: usize = 5;

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups; sum them for the positives.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                pos_rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// AUC plus precision, recall and F1 at the 0.5 score threshold (score ≥
/// 0.5 is positive). Precision with no predicted positives is 0.
pub fn binary_metrics(scores: &[f64], labels: &[bool]) -> Result<BinaryMetrics> {
    let auc = auc(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= DECISION_THRESHOLD, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = tp / (tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BinaryMetrics { auc, f1, precision, recall })
}

/// Fold of each sample. Each class is shuffled with `seed` and dealt
/// round-robin, so every fold gets its class count within one of n_c/k.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold[i] = j % k;
        }
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<BinaryMetrics>,
    pub mean: BinaryMetrics,
    /// Population standard deviation across folds.
    pub std: BinaryMetrics,
}

fn summarize(folds: Vec<BinaryMetrics>) -> CvReport {
    let n = folds.len() as f64;
    let get = |f: fn(&BinaryMetrics) -> f64| -> (f64, f64) {
        let m = folds.iter().map(f).sum::<f64>() / n;
        let v = folds.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    };
    let (a, f, p, r) = (get(|m| m.auc), get(|m| m.f1), get(|m| m.precision), get(|m| m.recall));
    CvReport {
        mean: BinaryMetrics { auc: a.0, f1: f.0, precision: p.0, recall: r.0 },
        std: BinaryMetrics { auc: a.1, f1: f.1, precision: p.1, recall: r.1 },
        folds,
    }
}

/// Stratified k-fold cross-validation; fold `i` trains with seed `seed + i`.
pub fn cross_validate(spec: &ModelSpec, x: &[Vec<f64>], y: &[bool], k: usize, seed: u64) -> Result<CvReport> {
    let npos = y.iter().filter(|&&v| v).count();
    if npos < k || y.len() - npos < k {
        return Err(Error::InvalidInput(format!("{k}-fold validation needs at least {k} samples per class")));
    }
    let fold = stratified_folds(y, k, seed);
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let (mut xt, mut yt, mut xv, mut yv) = (vec![], vec![], vec![], vec![]);
        for i in 0..y.len() {
            if fold[i] == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let model = spec.fit(&xt, &yt, seed.wrapping_add(f as u64))?;
        let scores: Vec<f64> = xv.iter().map(|r| model.predict_proba(r)).collect();
        out.push(binary_metrics(&scores, &yv)?);
    }
    Ok(summarize(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoReport {
    /// (country, held-out AUC), sorted by country.
    pub per_country: Vec<(String, f64)>,
    /// (country, reason) for countries left out.
    pub excluded: Vec<(String, String)>,
    /// Unweighted mean over included countries.
    pub mean_auc: f64,
}

impl LocoReport {
    pub fn lines(&self) -> Vec<String> {
        let mut v: Vec<String> = self.per_country.iter().map(|(c, a)| format!("{c}\tAUC {a:.4}")).collect();
        v.extend(self.excluded.iter().map(|(c, why)| format!("{c}\texcluded: {why}")));
        v.push(format!("mean\tAUC {:.4}", self.mean_auc));
        v
    }
}

/// Leave-one-country-out: each country with at least `min_per_class`
/// samples of both classes is scored by a model trained on all other
/// countries' cells.
pub fn loco(spec: &ModelSpec, cells: &[TrainingCell], min_per_class: usize, seed: u64) -> Result<LocoReport> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for c in cells {
        let e = counts.entry(c.country.as_str()).or_default();
        if c.label {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if counts.len() < 2 {
        return Err(Error::InvalidInput("leave-one-country-out needs at least two countries".into()));
    }
    let mut per_country = Vec::new();
    let mut excluded = Vec::new();
    for (&country, &(pos, neg)) in &counts {
        if pos < min_per_class || neg < min_per_class {
            let why = format!("{pos} field and {neg} non-field samples; need {min_per_class} of each");
            tracing::info!(country, "{why}");
            excluded.push((country.to_string(), why));
            continue;
        }
        let (train, test): (Vec<TrainingCell>, Vec<TrainingCell>) =
            cells.iter().cloned().partition(|c| c.country != country);
        let (xt, yt) = design(&train);
        let (xv, yv) = design(&test);
        let model = spec.fit(&xt, &yt, seed)?;
        let scores: Vec<f64> = xv.iter().map(|r| model.predict_proba(r)).collect();
        per_country.push((country.to_string(), auc(&scores, &yv)?));
    }
    if per_country.is_empty() {
        return Err(Error::InvalidInput("no country has enough samples of both classes".into()));
    }
    let mean_auc = per_country.iter().map(|(_, a)| a).sum::<f64>() / per_country.len() as f64;
    Ok(LocoReport {
        per_country,
        excluded,
        mean_auc,
    })
}
