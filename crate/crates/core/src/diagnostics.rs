//! Latent-movement manipulation check, generative/discriminative energy split
//! and logit diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SeedSummary;
use crate::model::{Condition, EnergyBreakdown};
use crate::probe::ProbeResult;

/// Movement ratio at or above which the manipulation check passes.
pub const MOVEMENT_THRESHOLD: f64 = 10.0;

/// Mean relative displacement of x1..x3 over an evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementRecord {
    pub seed: u64,
    pub condition: Condition,
    pub layers: [f64; 3],
}

impl MovementRecord {
    pub fn from_probes(seed: u64, condition: Condition, probes: &[ProbeResult]) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::Invalid("movement needs probe results".into()));
        }
        let mut layers = [0.0; 3];
        for l in 0..3 {
            layers[l] = sorted_sum(probes.iter().map(|p| p.displacement[l])) / probes.len() as f64;
        }
        Ok(Self { seed, condition, layers })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMovement {
    pub seed: u64,
    /// Per-layer `treated / reference`; `0/0` counts as 1.
    pub ratios: [f64; 3],
    /// Layers whose reference movement is zero while the treated one is not.
    pub infinite: [bool; 3],
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementCheck {
    pub seeds: Vec<SeedMovement>,
    /// Minimum over seeds of the per-seed maximum ratio.
    pub min_max_ratio: f64,
    pub confirmed: bool,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    match (num == 0.0, den == 0.0) {
        (true, true) => (1.0, false),
        (false, true) => (f64::INFINITY, true),
        _ => (num / den, false),
    }
}

/// Per-seed layer ratios `treated / reference` (bPC over stdPC) and the
/// threshold verdict on the weakest seed.
pub fn movement_check(reference: &[MovementRecord], treated: &[MovementRecord]) -> Result<MovementCheck> {
    let seeds_of = |r: &[MovementRecord]| {
        let mut s: Vec<u64> = r.iter().map(|m| m.seed).collect();
        s.sort_unstable();
        s
    };
    let seeds = seeds_of(reference);
    if seeds.is_empty() || seeds != seeds_of(treated) || seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("movement check needs one record per seed on matching seed sets".into()));
    }
    let find = |r: &[MovementRecord], s: u64| r.iter().find(|m| m.seed == s).expect("seed present").clone();
    let per_seed: Vec<SeedMovement> = seeds
        .iter()
        .map(|&s| {
            let (a, b) = (find(reference, s), find(treated, s));
            let mut ratios = [0.0; 3];
            let mut infinite = [false; 3];
            for l in 0..3 {
                (ratios[l], infinite[l]) = ratio(b.layers[l], a.layers[l]);
            }
            let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SeedMovement { seed: s, ratios, infinite, max_ratio }
        })
        .collect();
    let min_max_ratio = per_seed.iter().map(|s| s.max_ratio).fold(f64::INFINITY, f64::min);
    Ok(MovementCheck { seeds: per_seed, min_max_ratio, confirmed: min_max_ratio >= MOVEMENT_THRESHOLD })
}

/// Mean generative and discriminative energy over a set of breakdowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionAggregate {
    pub gen_mean: f64,
    pub disc_mean: f64,
    /// `gen_mean / disc_mean`.
    pub ratio: f64,
    pub count: usize,
}

/// Sums in ascending order so the result does not depend on input order.
fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Means over every breakdown given (inputs × hypotheses × seeds).
pub fn energy_split<'a>(breakdowns: impl IntoIterator<Item = &'a EnergyBreakdown>) -> Result<DecompositionAggregate> {
    let items: Vec<&EnergyBreakdown> = breakdowns.into_iter().collect();
    if items.is_empty() {
        return Err(Error::Invalid("energy split over an empty set".into()));
    }
    let n = items.len() as f64;
    let gen_mean = sorted_sum(items.iter().map(|b| b.gen_sum)) / n;
    let disc_mean = sorted_sum(items.iter().map(|b| b.disc_sum)) / n;
    let ratio = if gen_mean == 0.0 { 0.0 } else { gen_mean / disc_mean };
    Ok(DecompositionAggregate { gen_mean, disc_mean, ratio, count: items.len() })
}

/// Breakdowns of every hypothesis of every probe result.
pub fn probe_breakdowns(probes: &[ProbeResult]) -> impl Iterator<Item = &EnergyBreakdown> {
    probes.iter().flat_map(|p| p.breakdowns.iter())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRow {
    pub condition: Condition,
    pub seeds: usize,
    pub logit_norm: f64,
    pub logit_margin: f64,
    pub softmax_auroc2: f64,
}

/// Per-condition means over seeds, in condition order; absent conditions are skipped.
pub fn logit_table(summaries: &[SeedSummary]) -> Vec<LogitRow> {
    Condition::ALL
        .iter()
        .filter_map(|&c| {
            let rows: Vec<&SeedSummary> = summaries.iter().filter(|s| s.condition == c).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            let mean = |f: fn(&SeedSummary) -> f64| sorted_sum(rows.iter().map(|s| f(s))) / n;
            Some(LogitRow {
                condition: c,
                seeds: rows.len(),
                logit_norm: mean(|s| s.logit_norm),
                logit_margin: mean(|s| s.logit_margin),
                softmax_auroc2: mean(|s| s.softmax_auroc2),
            })
        })
        .collect()
}

/// Mean logit norm of stdPC-CE over stdPC-MSE.
pub fn ce_mse_norm_ratio(table: &[LogitRow]) -> Result<f64> {
    let get = |c| {
        table
            .iter()
            .find(|r| r.condition == c)
            .map(|r| r.logit_norm)
            .ok_or_else(|| Error::Invalid(format!("logit table lacks {c}")))
    };
    let (ce, mse) = (get(Condition::StdPcCe)?, get(Condition::StdPcMse)?);
    if mse == 0.0 {
        return Err(Error::ZeroVariance("stdpc-mse logit norm is zero".into()));
    }
    Ok(ce / mse)
}
