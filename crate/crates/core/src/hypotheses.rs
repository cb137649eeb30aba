//! The pre-registered test sequence: H3, H2, H1, the H1 supplement, H4, then
//! the two baseline-validity triggers.

use serde::{Deserialize, Serialize};

use crate::diagnostics::MovementCheck;
use crate::error::{Error, Result};
use crate::metrics::SeedSummary;
use crate::model::Condition;
use crate::stats::{paired_differences, t_test_one_sample, t_test_paired, wilcoxon_signed_rank, Direction, TestReport};

/// Probe-minus-softmax accuracy gap (bPC) above which the baseline is suspect.
pub const ACCURACY_TRIGGER: f64 = 0.05;
/// Softmax AUROC₂ gap (stdPC-CE vs bPC) above which the baseline is suspect.
pub const AUROC_TRIGGER: f64 = 0.05;

/// A t-test with its Wilcoxon companion; failures are kept as messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub id: String,
    pub description: String,
    pub t_test: std::result::Result<TestReport, String>,
    pub wilcoxon: std::result::Result<TestReport, String>,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub id: String,
    pub description: String,
    pub value: f64,
    pub threshold: f64,
    pub fired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seeds: Vec<u64>,
    pub h3: MovementCheck,
    /// H2, H1, H1-supplement, H4 in that order.
    pub tests: Vec<HypothesisResult>,
    pub triggers: Vec<Trigger>,
    /// No trigger fired.
    pub baseline_valid: bool,
}

impl SuiteReport {
    pub fn test(&self, id: &str) -> Option<&HypothesisResult> {
        self.tests.iter().find(|t| t.id == id)
    }

    /// Identifiers in evaluation order.
    pub fn order(&self) -> Vec<String> {
        let mut ids = vec!["H3".to_string()];
        ids.extend(self.tests.iter().map(|t| t.id.clone()));
        ids.extend(self.triggers.iter().map(|t| t.id.clone()));
        ids
    }
}

fn by_condition(summaries: &[SeedSummary], c: Condition, seeds: &[u64]) -> Result<Vec<SeedSummary>> {
    let mut rows: Vec<SeedSummary> = summaries.iter().filter(|s| s.condition == c).cloned().collect();
    rows.sort_by_key(|s| s.seed);
    let got: Vec<u64> = rows.iter().map(|s| s.seed).collect();
    if got != seeds {
        return Err(Error::Invalid(format!("{c} has seeds {got:?}, expected {seeds:?}")));
    }
    Ok(rows)
}

fn hypothesis(id: &str, description: &str, values: &[f64], direction: Direction, paired: Option<(&[f64], &[f64])>) -> HypothesisResult {
    let t_test = match paired {
        Some((a, b)) => t_test_paired(id, a, b, direction),
        None => t_test_one_sample(id, values, direction),
    }
    .map_err(|e| e.to_string());
    let wilcoxon = wilcoxon_signed_rank(id, values, direction).map_err(|e| e.to_string());
    let confirmed = t_test.as_ref().map(|r| r.confirmed).unwrap_or(false);
    HypothesisResult { id: id.into(), description: description.into(), t_test, wilcoxon, confirmed }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the suite over per-seed summaries of all three conditions.
pub fn hypothesis_suite(summaries: &[SeedSummary], movement: &MovementCheck) -> Result<SuiteReport> {
    let mut seeds: Vec<u64> = summaries.iter().filter(|s| s.condition == Condition::StdPcCe).map(|s| s.seed).collect();
    seeds.sort_unstable();
    if seeds.is_empty() || seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("hypothesis suite needs one stdpc-ce summary per seed".into()));
    }
    let ce = by_condition(summaries, Condition::StdPcCe, &seeds)?;
    let mse = by_condition(summaries, Condition::StdPcMse, &seeds)?;
    let bpc = by_condition(summaries, Condition::Bpc, &seeds)?;
    let movement_seeds: Vec<u64> = movement.seeds.iter().map(|s| s.seed).collect();
    if movement_seeds != seeds {
        return Err(Error::Invalid(format!("movement seeds {movement_seeds:?} differ from {seeds:?}")));
    }

    let d_ce: Vec<f64> = ce.iter().map(|s| s.delta).collect();
    let d_mse: Vec<f64> = mse.iter().map(|s| s.delta).collect();
    let d_bpc: Vec<f64> = bpc.iter().map(|s| s.delta).collect();
    let d_h1 = paired_differences("H1", &d_bpc, &d_ce)?;
    let d_h4 = paired_differences("H4", &d_mse, &d_ce)?;

    let tests = vec![
        hypothesis("H2", "mean Δ(stdpc-ce) < 0", &d_ce, Direction::Less, None),
        hypothesis("H1", "mean Δ(bpc) − Δ(stdpc-ce) > 0", &d_h1, Direction::Greater, Some((&d_bpc, &d_ce))),
        hypothesis("H1-supplement", "mean Δ(bpc) > 0", &d_bpc, Direction::Greater, None),
        hypothesis("H4", "exploratory: mean Δ(stdpc-mse) − Δ(stdpc-ce) > 0", &d_h4, Direction::Greater, Some((&d_mse, &d_ce))),
    ];

    let acc_gap = mean(bpc.iter().map(|s| s.probe_acc - s.softmax_acc));
    let auroc_gap = mean(ce.iter().map(|s| s.softmax_auroc2)) - mean(bpc.iter().map(|s| s.softmax_auroc2));
    let triggers = vec![
        Trigger {
            id: "trigger-accuracy".into(),
            description: "|bpc probe accuracy − bpc softmax accuracy|".into(),
            value: acc_gap,
            threshold: ACCURACY_TRIGGER,
            fired: acc_gap.abs() > ACCURACY_TRIGGER,
        },
        Trigger {
            id: "trigger-auroc".into(),
            description: "|stdpc-ce softmax AUROC₂ − bpc softmax AUROC₂|".into(),
            value: auroc_gap,
            threshold: AUROC_TRIGGER,
            fired: auroc_gap.abs() > AUROC_TRIGGER,
        },
    ];
    let baseline_valid = triggers.iter().all(|t| !t.fired);
    Ok(SuiteReport { seeds, h3: movement.clone(), tests, triggers, baseline_valid })
}
