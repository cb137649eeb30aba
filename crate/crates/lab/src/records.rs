//! CSV row types for every table the pipeline writes.

use std::path::Path;

use anyhow::{Context, Result};
use pclab_core::metrics::{EvalRecord, SeedSummary};
use pclab_core::model::{Condition, EpochLog};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub condition: Condition,
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

impl MetricsRow {
    pub fn new(seed: u64, condition: Condition, r: &EvalRecord) -> Self {
        Self {
            seed,
            condition,
            index: r.index,
            label: r.label,
            softmax_prediction: r.softmax_prediction,
            softmax_correct: r.softmax_correct,
            softmax_margin: r.softmax_margin,
            probe_prediction: r.probe_prediction,
            probe_correct: r.probe_correct,
            probe_margin: r.probe_margin,
            logit_norm: r.logit_norm,
            logit_margin: r.logit_margin,
        }
    }

    pub fn record(&self) -> EvalRecord {
        EvalRecord {
            index: self.index,
            label: self.label,
            softmax_prediction: self.softmax_prediction,
            softmax_correct: self.softmax_correct,
            softmax_margin: self.softmax_margin,
            probe_prediction: self.probe_prediction,
            probe_correct: self.probe_correct,
            probe_margin: self.probe_margin,
            logit_norm: self.logit_norm,
            logit_margin: self.logit_margin,
        }
    }
}

/// Settled energy of one candidate class for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub seed: u64,
    pub condition: Condition,
    pub index: usize,
    pub hypothesis: usize,
    pub total: f64,
    pub disc_sum: f64,
    pub gen_sum: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitValueRow {
    pub seed: u64,
    pub condition: Condition,
    pub index: usize,
    pub class: usize,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRow {
    pub seed: u64,
    pub condition: Condition,
    pub layer: usize,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub seed: u64,
    pub index: usize,
    pub class: usize,
    pub energy_margin: f64,
    pub log_softmax_margin: f64,
    pub residual: f64,
    pub energy_margin_second: f64,
    pub log_softmax_margin_second: f64,
    pub residual_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub seed: u64,
    pub gen_mean: f64,
    pub disc_mean: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub seed: u64,
    pub condition: Condition,
    pub epoch: usize,
    pub train_energy: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

impl TrainLogRow {
    pub fn new(seed: u64, condition: Condition, l: &EpochLog) -> Self {
        Self {
            seed,
            condition,
            epoch: l.epoch,
            train_energy: l.train_energy,
            train_accuracy: l.train_accuracy,
            test_accuracy: l.test_accuracy,
        }
    }
}

/// A [`SeedSummary`] plus the softmax accuracy on the whole test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub condition: Condition,
    pub softmax_acc_eval: f64,
    pub probe_acc_eval: f64,
    pub softmax_acc_full_test: f64,
    pub softmax_auroc2: f64,
    pub probe_auroc2: f64,
    pub delta: f64,
    pub logit_norm: f64,
    pub logit_margin: f64,
}

impl SummaryRow {
    pub fn new(s: &SeedSummary, full_test: f64) -> Self {
        Self {
            seed: s.seed,
            condition: s.condition,
            softmax_acc_eval: s.softmax_acc,
            probe_acc_eval: s.probe_acc,
            softmax_acc_full_test: full_test,
            softmax_auroc2: s.softmax_auroc2,
            probe_auroc2: s.probe_auroc2,
            delta: s.delta,
            logit_norm: s.logit_norm,
            logit_margin: s.logit_margin,
        }
    }

    pub fn summary(&self) -> SeedSummary {
        SeedSummary {
            seed: self.seed,
            condition: self.condition,
            softmax_acc: self.softmax_acc_eval,
            probe_acc: self.probe_acc_eval,
            softmax_auroc2: self.softmax_auroc2,
            probe_auroc2: self.probe_auroc2,
            delta: self.delta,
            logit_norm: self.logit_norm,
            logit_margin: self.logit_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub auroc2_mean: f64,
    pub auroc2_sd: f64,
    pub logit_norm_mean: f64,
    pub norm_matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha_gen: f64,
    pub probe_acc_mean: f64,
    pub probe_acc_sd: f64,
    pub energy_margin_mean: f64,
    pub selected: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{} row {}", path.display(), i + 1)))
        .collect()
}
