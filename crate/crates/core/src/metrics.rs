//! Type-2 AUROC, per-seed summaries and temperature scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Condition;
use crate::probe::{softmax_results, ProbeResult, SoftmaxResult};
use crate::tensor::Tensor;

/// Area under the ROC curve for separating `correct` from incorrect entries by
/// `score` (Mann–Whitney, ties credited ½).
pub fn auroc2(scores: &[f64], correct: &[bool]) -> Result<f64> {
    if scores.len() != correct.len() {
        return Err(Error::Shape { op: "auroc2", detail: format!("{} scores vs {} flags", scores.len(), correct.len()) });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("auroc2 scores contain NaN".into()));
    }
    let n_pos = correct.iter().filter(|&&c| c).count() as u64;
    let n_neg = correct.len() as u64 - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedAuroc("no correct entries"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedAuroc("no incorrect entries"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled mid-ranks keep the rank sum an exact integer.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        rank_sum2 += mid2 * idx[i..=j].iter().filter(|&&k| correct[k]).count() as u64;
        i = j + 1;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / 2.0 / (n_pos * n_neg) as f64)
}

/// Per-input outcome of both readouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub label: usize,
    pub softmax_prediction: usize,
    pub softmax_correct: bool,
    pub softmax_margin: f64,
    pub probe_prediction: usize,
    pub probe_correct: bool,
    pub probe_margin: f64,
    pub logit_norm: f64,
    pub logit_margin: f64,
}

impl EvalRecord {
    pub fn new(index: usize, label: usize, soft: &SoftmaxResult, probe: &ProbeResult) -> Self {
        Self {
            index,
            label,
            softmax_prediction: soft.prediction,
            softmax_correct: soft.prediction == label,
            softmax_margin: soft.margin,
            probe_prediction: probe.prediction,
            probe_correct: probe.prediction == label,
            probe_margin: probe.margin,
            logit_norm: soft.logit_norm,
            logit_margin: soft.logit_margin,
        }
    }
}

/// Readout comparison for one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub condition: Condition,
    pub softmax_acc: f64,
    pub probe_acc: f64,
    pub softmax_auroc2: f64,
    pub probe_auroc2: f64,
    pub delta: f64,
    pub logit_norm: f64,
    pub logit_margin: f64,
}

impl SeedSummary {
    pub fn from_records(seed: u64, condition: Condition, records: &[EvalRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Invalid("seed summary needs evaluation records".into()));
        }
        let n = records.len() as f64;
        let col = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        let sc: Vec<bool> = records.iter().map(|r| r.softmax_correct).collect();
        let pc: Vec<bool> = records.iter().map(|r| r.probe_correct).collect();
        let softmax_auroc2 = auroc2(&col(|r| r.softmax_margin), &sc)?;
        let probe_auroc2 = auroc2(&col(|r| r.probe_margin), &pc)?;
        Ok(Self {
            seed,
            condition,
            softmax_acc: sc.iter().filter(|&&c| c).count() as f64 / n,
            probe_acc: pc.iter().filter(|&&c| c).count() as f64 / n,
            softmax_auroc2,
            probe_auroc2,
            delta: probe_auroc2 - softmax_auroc2,
            logit_norm: col(|r| r.logit_norm).iter().sum::<f64>() / n,
            logit_margin: col(|r| r.logit_margin).iter().sum::<f64>() / n,
        })
    }
}

/// Softmax readouts of `logits / t`.
pub fn temperature_rescale(logits: &Tensor, t: f64) -> Result<Vec<SoftmaxResult>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Invalid(format!("temperature must be positive, got {t}")));
    }
    if t == 1.0 {
        return Ok(softmax_results(logits));
    }
    Ok(softmax_results(&logits.map(|v| v / t)))
}

/// Mean L2 norm of the logit rows.
pub fn mean_logit_norm(logits: &Tensor) -> f64 {
    let n = logits.dim(0);
    (0..n).map(|i| logits.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / n.max(1) as f64
}

/// Temperature that brings the mean logit norm of `logits` to `target_norm`.
pub fn norm_match_temperature(logits: &Tensor, target_norm: f64) -> Result<f64> {
    norm_match_from_mean(mean_logit_norm(logits), target_norm)
}

pub fn norm_match_from_mean(mean_norm: f64, target_norm: f64) -> Result<f64> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(Error::Invalid(format!("target norm must be positive, got {target_norm}")));
    }
    if !(mean_norm > 0.0 && mean_norm.is_finite()) {
        return Err(Error::Invalid(format!("mean logit norm must be positive, got {mean_norm}")));
    }
    Ok(mean_norm / target_norm)
}

/// Softmax AUROC₂ of `logits / t` against `labels`.
pub fn auroc2_at_temperature(logits: &Tensor, labels: &[usize], t: f64) -> Result<f64> {
    let res = temperature_rescale(logits, t)?;
    let scores: Vec<f64> = res.iter().map(|r| r.margin).collect();
    let correct: Vec<bool> = res.iter().zip(labels).map(|(r, &l)| r.prediction == l).collect();
    auroc2(&scores, &correct)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| r[k] = mid);
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with mid-ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid("spearman needs two equal-length samples of size ≥ 2".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Err(Error::ZeroVariance("spearman ranks".into()));
    }
    Ok(cov / (va * vb).sqrt())
}
