use std::path::Path;

use pclab::figures::{emit_figures, fig1, fig2, fig3, Table};
use pclab::records::{write_csv, SummaryRow, TemperatureRow};
use pclab_core::model::Condition;

fn summary_rows(seeds: u64) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (ci, c) in Condition::ALL.into_iter().enumerate() {
        for s in 0..seeds {
            let delta = [-0.08, -0.04, 0.01][ci] + 0.002 * s as f64;
            rows.push(SummaryRow {
                seed: 6 + s,
                condition: c,
                softmax_acc_eval: 0.7,
                probe_acc_eval: 0.69,
                softmax_acc_full_test: 0.7,
                softmax_auroc2: 0.84,
                probe_auroc2: 0.84 + delta,
                delta,
                logit_norm: [11.5, 0.78, 0.8][ci] + 0.01 * s as f64,
                logit_margin: 1.0,
            });
        }
    }
    rows
}

fn temperature_rows() -> Vec<TemperatureRow> {
    [(1.0, 0.842), (2.0, 0.82), (5.0, 0.80), (10.0, 0.79), (14.7, 0.785), (15.0, 0.784), (30.0, 0.784)]
        .into_iter()
        .map(|(t, a)| TemperatureRow { t, auroc2_mean: a, auroc2_sd: 0.01, logit_norm_mean: 11.52 / t, norm_matched: t == 14.7 })
        .collect()
}

fn table<T: serde::Serialize>(dir: &Path, name: &str, rows: &[T]) -> Table {
    let path = dir.join(name);
    write_csv(&path, rows).unwrap();
    Table::read(&path).unwrap()
}

#[test]
fn fig1_has_a_point_per_run_and_two_links_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let svg = fig1(&table(dir.path(), "summary.csv", &summary_rows(10))).unwrap();
    assert_eq!(svg.matches(r#"class="seed""#).count(), 30);
    assert_eq!(svg.matches(r#"class="link""#).count(), 20);
    assert_eq!(svg.matches(r#"class="mean""#).count(), 3);
    assert!(svg.starts_with("<?xml") && svg.contains(r#"version="1.1""#) && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn fig2_plots_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let svg = fig2(&table(dir.path(), "summary.csv", &summary_rows(3))).unwrap();
    assert_eq!(svg.matches(r#"class="seed""#).count(), 9);
}

#[test]
fn fig3_polyline_is_non_increasing_with_dashed_probe_line() {
    let dir = tempfile::tempdir().unwrap();
    let svg = fig3(&table(dir.path(), "temperature.csv", &temperature_rows()), 0.76).unwrap();
    let line = svg.lines().find(|l| l.contains(r#"class="softmax""#)).unwrap();
    let points = line.split(r#"points=""#).nth(1).unwrap().split('"').next().unwrap();
    let ys: Vec<f64> = points.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ys.len(), 7);
    // SVG y grows downwards, so a non-increasing AUROC is a non-decreasing y.
    assert!(ys.windows(2).all(|w| w[1] >= w[0]), "{ys:?}");
    let probe = svg.lines().find(|l| l.contains(r#"class="probe""#)).unwrap();
    assert!(probe.contains("stroke-dasharray"));
    assert_eq!(svg.matches(r#"class="matched""#).count(), 1);
}

#[test]
fn figures_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let t = table(dir.path(), "summary.csv", &summary_rows(4));
    assert_eq!(fig1(&t).unwrap(), fig1(&t).unwrap());
    assert_eq!(fig2(&t).unwrap(), fig2(&t).unwrap());
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    std::fs::write(&path, "seed,condition,logit_norm\n6,stdpc-ce,1.0\n").unwrap();
    let err = fig1(&Table::read(&path).unwrap()).unwrap_err().to_string();
    assert!(err.contains("\"delta\""), "{err}");
}

#[test]
fn empty_input_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("summary.csv"), "seed,condition,delta,logit_norm,probe_auroc2\n").unwrap();
    table(dir.path(), "temperature.csv", &temperature_rows());
    assert!(emit_figures(dir.path()).is_err());
    assert!(!dir.path().join("figures").exists());
}

#[test]
fn emit_writes_three_documents() {
    let dir = tempfile::tempdir().unwrap();
    table(dir.path(), "summary.csv", &summary_rows(3));
    table(dir.path(), "temperature.csv", &temperature_rows());
    emit_figures(dir.path()).unwrap();
    for f in ["fig1.svg", "fig2.svg", "fig3.svg"] {
        assert!(dir.path().join("figures").join(f).exists());
    }
}
