//! Temperature and α_gen sweeps.

use anyhow::{bail, Context, Result};
use pclab_core::metrics::{auroc2, temperature_rescale};
use pclab_core::model::{build_tinyconv, train, Condition, TrainConfig};
use pclab_core::probe::kway_probe;
use pclab_core::rng::Rng;
use pclab_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::pipeline::{Evaluation, Pipeline};
use crate::records::{AlphaRow, TemperatureRow};

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, sd)
}

/// Softmax AUROC₂ and mean logit norm of one network's logits at `t`.
pub fn auroc_and_norm(logits: &Tensor, labels: &[usize], t: f64) -> Result<(f64, f64)> {
    let res = temperature_rescale(logits, t)?;
    let scores: Vec<f64> = res.iter().map(|r| r.margin).collect();
    let correct: Vec<bool> = res.iter().zip(labels).map(|(r, &l)| r.prediction == l).collect();
    let norm = res.iter().map(|r| r.logit_norm).sum::<f64>() / res.len() as f64;
    Ok((auroc2(&scores, &correct)?, norm))
}

/// Per-temperature seed means and SDs, in ascending T; `matched` is marked.
pub fn temperature_table(networks: &[(Tensor, Vec<usize>)], grid: &[f64], matched: Option<f64>) -> Result<Vec<TemperatureRow>> {
    if grid.is_empty() || networks.is_empty() {
        bail!("temperature sweep needs a non-empty grid and at least one network");
    }
    let mut ts: Vec<f64> = grid.to_vec();
    if let Some(m) = matched {
        ts.push(m);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.iter()
        .map(|&t| {
            let per: Vec<(f64, f64)> = networks.iter().map(|(l, y)| auroc_and_norm(l, y, t)).collect::<Result<_>>()?;
            let (auroc2_mean, auroc2_sd) = mean_sd(&per.iter().map(|p| p.0).collect::<Vec<_>>());
            let (logit_norm_mean, _) = mean_sd(&per.iter().map(|p| p.1).collect::<Vec<_>>());
            Ok(TemperatureRow { t, auroc2_mean, auroc2_sd, logit_norm_mean, norm_matched: matched == Some(t) })
        })
        .collect()
}

/// Whether AUROC₂ never rises by more than `band` from one temperature to the next.
pub fn non_increasing_within(rows: &[TemperatureRow], band: f64) -> bool {
    rows.windows(2).all(|w| w[1].auroc2_mean <= w[0].auroc2_mean + band)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSweep {
    pub seeds: Vec<u64>,
    pub rows: Vec<TemperatureRow>,
    pub reference_norm: f64,
    /// "config" or "stdpc-mse mean".
    pub reference_source: String,
    pub logit_norm_t1: f64,
    pub norm_matched_t: f64,
    pub softmax_auroc2_t1: f64,
    pub softmax_auroc2_matched: f64,
    pub probe_auroc2: f64,
    /// Softmax AUROC₂ at T=1 minus probe AUROC₂.
    pub gap: f64,
    /// Fraction of `gap` removed at the norm-matched temperature.
    pub gap_reduction: f64,
    pub plateau_band: f64,
    pub non_increasing: bool,
}

/// Rescales each stdPC-CE network's evaluation logits over the configured grid
/// plus the norm-matched temperature.
pub fn sweep_temperature(p: &Pipeline, eval: &Evaluation) -> Result<TemperatureSweep> {
    let seeds = p.sorted_seeds();
    let networks: Vec<(Tensor, Vec<usize>)> =
        seeds.iter().map(|&s| p.eval_logits(Condition::StdPcCe, s)).collect::<Result<_>>()?;
    let ce: Vec<_> = eval.summaries.iter().filter(|s| s.condition == Condition::StdPcCe).collect();
    let (reference_norm, reference_source) = match p.cfg.sweeps.reference_norm {
        Some(r) => (r, "config"),
        None => {
            let mse: Vec<f64> = eval.summaries.iter().filter(|s| s.condition == Condition::StdPcMse).map(|s| s.logit_norm).collect();
            if mse.is_empty() {
                bail!("no stdpc-mse summaries to take the reference norm from");
            }
            (mean_sd(&mse).0, "stdpc-mse mean")
        }
    };
    let logit_norm_t1 = mean_sd(&ce.iter().map(|s| s.logit_norm).collect::<Vec<_>>()).0;
    let t_star = pclab_core::metrics::norm_match_from_mean(logit_norm_t1, reference_norm)?;
    let rows = temperature_table(&networks, &p.cfg.sweeps.temperatures, Some(t_star))?;
    let at = |t: f64| rows.iter().find(|r| r.t == t).map(|r| r.auroc2_mean).context("temperature missing from table");
    let softmax_auroc2_t1 = match rows.iter().find(|r| r.t == 1.0) {
        Some(r) => r.auroc2_mean,
        None => temperature_table(&networks, &[1.0], None)?[0].auroc2_mean,
    };
    let softmax_auroc2_matched = at(t_star)?;
    let probe_auroc2 = mean_sd(&ce.iter().map(|s| s.probe_auroc2).collect::<Vec<_>>()).0;
    let gap = softmax_auroc2_t1 - probe_auroc2;
    let band = p.cfg.sweeps.plateau_band;
    Ok(TemperatureSweep {
        seeds,
        non_increasing: non_increasing_within(&rows, band),
        rows,
        reference_norm,
        reference_source: reference_source.into(),
        logit_norm_t1,
        norm_matched_t: t_star,
        softmax_auroc2_t1,
        softmax_auroc2_matched,
        probe_auroc2,
        gap,
        gap_reduction: (softmax_auroc2_t1 - softmax_auroc2_matched) / gap,
        plateau_band: band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub rows: Vec<AlphaRow>,
    pub selected: f64,
    pub rule: String,
}

/// Picks the preferred alpha when its accuracy is within `band` of the best, else the best.
pub fn select_alpha(rows: &[AlphaRow], preferred: f64, band: f64) -> Result<f64> {
    let best = rows
        .iter()
        .max_by(|a, b| a.probe_acc_mean.total_cmp(&b.probe_acc_mean))
        .context("alpha grid is empty")?;
    match rows.iter().find(|r| r.alpha_gen == preferred) {
        Some(p) if best.probe_acc_mean - p.probe_acc_mean <= band => Ok(preferred),
        _ => Ok(best.alpha_gen),
    }
}

/// Trains bPC at every α_gen of the grid on the sweep seeds and compares probe
/// accuracy and mean energy margin on the evaluation set.
pub fn sweep_alpha(cfg: &ExperimentConfig, p: &Pipeline) -> Result<AlphaSweep> {
    let grid = &cfg.sweeps.alpha_gen;
    if grid.is_empty() {
        bail!("alpha grid is empty");
    }
    let data = p.condition_data(Condition::Bpc)?;
    let base = cfg.energy(Condition::Bpc)?;
    let mut rows = Vec::new();
    for &alpha in grid {
        let energy = pclab_core::model::EnergyConfig { alpha_gen: alpha, ..base };
        let tc = TrainConfig { epochs: cfg.epochs, batch_size: cfg.batch_size, optimizer: cfg.optimizer, energy };
        let mut accs = Vec::new();
        let mut margins = Vec::new();
        for &seed in &cfg.sweeps.alpha_seeds {
            let (_, mut params) = build_tinyconv(&Rng::new(seed))?;
            train(&mut params, &data.train, None, &tc, seed, |_| {})?;
            let probes = kway_probe(&params, &data.eval.images, &energy)?;
            let hits = probes.iter().zip(&data.eval.labels).filter(|(r, &l)| r.prediction == l).count();
            accs.push(hits as f64 / probes.len() as f64);
            margins.push(probes.iter().map(|r| r.margin).sum::<f64>() / probes.len() as f64);
            eprintln!("[alpha {alpha:e} seed {seed}] probe accuracy {:.4}", accs.last().unwrap());
        }
        let (probe_acc_mean, probe_acc_sd) = mean_sd(&accs);
        rows.push(AlphaRow { alpha_gen: alpha, probe_acc_mean, probe_acc_sd, energy_margin_mean: mean_sd(&margins).0, selected: false });
    }
    let selected = select_alpha(&rows, cfg.sweeps.alpha_preferred, cfg.sweeps.alpha_tie_band)?;
    rows.iter_mut().for_each(|r| r.selected = r.alpha_gen == selected);
    let rule = format!(
        "select {:e} when its probe accuracy is within {} of the best, otherwise the most accurate",
        cfg.sweeps.alpha_preferred, cfg.sweeps.alpha_tie_band
    );
    Ok(AlphaSweep { rows, selected, rule })
}
