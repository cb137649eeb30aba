//! Markdown report of a completed evaluation.

use std::fmt::Write as _;

use pclab_core::hypotheses::HypothesisResult;
use pclab_core::model::Condition;
use pclab_core::stats::TestReport;

use crate::config::ExperimentConfig;
use crate::pipeline::{DataInfo, Evaluation};
use crate::sweeps::TemperatureSweep;

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn test_line(r: &TestReport) -> String {
    let df = r.df.map(|d| format!("({d})")).unwrap_or_default();
    let effect = r.effect_size.map(|d| format!(", d = {d:.3}")).unwrap_or_default();
    format!(
        "{:?}{df}: statistic = {:.4}, one-sided p = {:.3e}{effect}, mean = {:.4} (SD {:.4}), 95% CI [{:.4}, {:.4}], signs +{}/−{}/0:{}",
        r.test, r.statistic, r.p_value, r.mean, r.sd, r.ci95[0], r.ci95[1], r.signs.positive, r.signs.negative, r.signs.zero
    )
}

fn hypothesis_block(s: &mut String, h: &HypothesisResult) {
    let verdict = if h.confirmed { "confirmed" } else { "not confirmed" };
    writeln!(s, "### {}: {} ({verdict})\n", h.id, h.description).unwrap();
    for r in [&h.t_test, &h.wilcoxon] {
        match r {
            Ok(r) => writeln!(s, "- {}", test_line(r)).unwrap(),
            Err(e) => writeln!(s, "- error: {e}").unwrap(),
        }
    }
    s.push('\n');
}

pub fn render(cfg: &ExperimentConfig, data: &DataInfo, eval: &Evaluation, temp: Option<&TemperatureSweep>) -> String {
    let mut s = String::new();
    writeln!(s, "# Probe versus softmax confidence report\n").unwrap();
    writeln!(
        s,
        "Data: {} ({} train, {} test, first {} test images evaluated). Seeds {:?}, {} epochs, batch size {}.\n",
        data.source, data.train_examples, data.test_examples, data.eval_examples, cfg.seeds, cfg.epochs, cfg.batch_size
    )
    .unwrap();

    writeln!(s, "## Condition means\n").unwrap();
    writeln!(s, "| Condition | Soft. acc (eval) | Soft. acc (full test) | Probe acc (eval) | Soft. AUROC2 | Probe AUROC2 | Delta |").unwrap();
    writeln!(s, "|---|---|---|---|---|---|---|").unwrap();
    for c in Condition::ALL {
        let rows: Vec<_> = eval.summaries.iter().filter(|r| r.condition == c).collect();
        if rows.is_empty() {
            continue;
        }
        writeln!(
            s,
            "| {c} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:+.4} |",
            mean(rows.iter().map(|r| r.softmax_acc_eval)),
            mean(rows.iter().map(|r| r.softmax_acc_full_test)),
            mean(rows.iter().map(|r| r.probe_acc_eval)),
            mean(rows.iter().map(|r| r.softmax_auroc2)),
            mean(rows.iter().map(|r| r.probe_auroc2)),
            mean(rows.iter().map(|r| r.delta)),
        )
        .unwrap();
    }

    writeln!(s, "\n## Per-seed delta\n").unwrap();
    writeln!(s, "| Seed | stdpc-ce | stdpc-mse | bpc |").unwrap();
    writeln!(s, "|---|---|---|---|").unwrap();
    for seed in &eval.suite.seeds {
        let d = |c: Condition| {
            eval.summaries
                .iter()
                .find(|r| r.condition == c && r.seed == *seed)
                .map(|r| format!("{:+.4}", r.delta))
                .unwrap_or_else(|| "-".into())
        };
        writeln!(s, "| {seed} | {} | {} | {} |", d(Condition::StdPcCe), d(Condition::StdPcMse), d(Condition::Bpc)).unwrap();
    }

    writeln!(s, "\n## Hypotheses (evaluation order)\n").unwrap();
    let h3 = &eval.suite.h3;
    writeln!(s, "### H3: bpc latent movement at least 10x stdpc-ce ({})\n", if h3.confirmed { "confirmed" } else { "not confirmed" }).unwrap();
    for m in &h3.seeds {
        let r: Vec<String> = m
            .ratios
            .iter()
            .zip(m.infinite)
            .map(|(r, inf)| if inf { "inf (zero reference)".into() } else { format!("{r:.3}") })
            .collect();
        writeln!(s, "- seed {}: layer ratios [{}], max {:.3}", m.seed, r.join(", "), m.max_ratio).unwrap();
    }
    writeln!(s, "- minimum over seeds of the maximum ratio: {:.3}\n", h3.min_max_ratio).unwrap();
    for h in &eval.suite.tests {
        hypothesis_block(&mut s, h);
    }
    writeln!(s, "### Baseline validity triggers ({})\n", if eval.suite.baseline_valid { "valid" } else { "fired" }).unwrap();
    for t in &eval.suite.triggers {
        writeln!(s, "- {}: {} = {:+.4} (threshold {}) {}", t.id, t.description, t.value, t.threshold, if t.fired { "FIRED" } else { "ok" }).unwrap();
    }

    writeln!(s, "\n## Logit diagnostics\n").unwrap();
    writeln!(s, "| Condition | Logit norm | Logit margin | Soft. AUROC2 |").unwrap();
    writeln!(s, "|---|---|---|---|").unwrap();
    for r in &eval.logit_table {
        writeln!(s, "| {} | {:.4} | {:.4} | {:.4} |", r.condition, r.logit_norm, r.logit_margin, r.softmax_auroc2).unwrap();
    }
    if let Some(r) = eval.ce_mse_norm_ratio {
        writeln!(s, "\nstdpc-ce / stdpc-mse logit norm ratio: {r:.3}").unwrap();
    }

    writeln!(s, "\n## Energy decomposition\n").unwrap();
    writeln!(s, "| Condition | Gen mean | Disc mean | Gen/disc |").unwrap();
    writeln!(s, "|---|---|---|---|").unwrap();
    for (c, a) in &eval.energy_split {
        writeln!(s, "| {c} | {:.6e} | {:.6e} | {:.6e} |", a.gen_mean, a.disc_mean, a.ratio).unwrap();
    }
    if let Some(r) = eval.residual_spearman {
        writeln!(s, "\nSpearman correlation of stdpc-ce energy margins with log-softmax margins: {r:.4}").unwrap();
    }

    if let Some(t) = temp {
        writeln!(s, "\n## Temperature sweep (stdpc-ce)\n").unwrap();
        writeln!(s, "| T | Soft. AUROC2 | SD | Logit norm |").unwrap();
        writeln!(s, "|---|---|---|---|").unwrap();
        for r in &t.rows {
            let mark = if r.norm_matched { " (norm-matched)" } else { "" };
            writeln!(s, "| {:.3}{mark} | {:.4} | {:.4} | {:.4} |", r.t, r.auroc2_mean, r.auroc2_sd, r.logit_norm_mean).unwrap();
        }
        writeln!(
            s,
            "\nReference norm {:.4} ({}); norm-matched T = {:.3}. Gap (softmax at T=1 minus probe) {:.4}; removed at the matched T: {:.4} ({:.1}%). Non-increasing within {}: {}.",
            t.reference_norm,
            t.reference_source,
            t.norm_matched_t,
            t.gap,
            t.softmax_auroc2_t1 - t.softmax_auroc2_matched,
            100.0 * t.gap_reduction,
            t.plateau_band,
            t.non_increasing
        )
        .unwrap();
    }
    s
}
