use std::fs;
use std::path::Path;

use pclab::config::{ExperimentConfig, Preset};
use pclab::pipeline::{config_fingerprint, Pipeline, Stage};
use pclab::records::{read_csv, AlphaRow, MetricsRow};
use pclab::sweeps::{select_alpha, temperature_table};
use pclab_core::metrics::auroc2;
use pclab_core::probe::softmax_results;
use pclab_core::rng::Rng;
use pclab_core::Tensor;

fn smoke(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.seeds = vec![3];
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.data.train_size = 60;
    cfg.data.eval_size = 40;
    cfg.data.synthetic.test_size = 50;
    for e in cfg.energy.values_mut() {
        e.t_train = 1;
        e.t_eval = 2;
    }
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn non_empty_csv(path: &Path) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(text.lines().count() >= 2, "{} has no data rows", path.display());
}

#[test]
fn smoke_pipeline_completes_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let mut p = Pipeline::open(smoke(dir)).unwrap();
        p.all().unwrap();
        assert!(p.manifest.complete);
        assert!(Stage::ALL.iter().all(|s| p.manifest.stages[s]));
    }
    let out = a.path();
    for f in ["metrics.csv", "energies.csv", "logits.csv", "movement.csv", "residuals.csv", "summary.csv", "decomposition.csv", "logit_table.csv", "temperature.csv"] {
        non_empty_csv(&out.join(f));
    }
    for f in ["report.md", "hypotheses.json", "evaluation.json", "figures/fig1.svg", "figures/fig2.svg", "figures/fig3.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let rows: Vec<MetricsRow> = read_csv(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 40);
    for f in ["metrics.csv", "summary.csv", "temperature.csv", "report.md", "figures/fig1.svg", "figures/fig3.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    let (h3, h2, h1) = (report.find("### H3").unwrap(), report.find("### H2").unwrap(), report.find("### H1:").unwrap());
    assert!(h3 < h2 && h2 < h1);
}

#[test]
fn rerun_in_same_directory_reuses_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::open(smoke(dir.path())).unwrap().all().unwrap();
    let first = fs::read(dir.path().join("metrics.csv")).unwrap();
    Pipeline::open(smoke(dir.path())).unwrap().all().unwrap();
    assert_eq!(first, fs::read(dir.path().join("metrics.csv")).unwrap());
}

#[test]
fn different_config_in_same_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::open(smoke(dir.path())).unwrap();
    let mut other = smoke(dir.path());
    other.epochs = 2;
    let err = Pipeline::open(other).err().unwrap().to_string();
    assert!(err.contains("different configuration"), "{err}");
}

#[test]
fn fingerprint_ignores_output_directory() {
    let a = smoke(Path::new("x"));
    let b = smoke(Path::new("y"));
    assert_eq!(config_fingerprint(&a), config_fingerprint(&b));
    let mut c = smoke(Path::new("x"));
    c.seeds = vec![4];
    assert_ne!(config_fingerprint(&a), config_fingerprint(&c));
}

#[test]
fn config_validation() {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.validate().unwrap();
    cfg.seeds = vec![6, 6];
    assert!(cfg.validate().is_err());
    cfg.seeds = vec![];
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.data.eval_size = cfg.data.synthetic.test_size + 1;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::preset(Preset::Full);
    assert_eq!(cfg.seeds, (6..=15).collect::<Vec<_>>());
    assert_eq!(cfg.data.eval_size, 1_280);
    cfg.sweeps.temperatures.push(0.0);
    assert!(cfg.validate().is_err());
}

#[test]
fn config_overlay_merges_over_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"epochs": 2, "data": {"eval_size": 100}}"#).unwrap();
    let cfg = ExperimentConfig::load(Preset::Desk, Some(&path)).unwrap();
    assert_eq!((cfg.epochs, cfg.data.eval_size, cfg.data.train_size), (2, 100, 4_000));
    fs::write(&path, r#"{"epochz": 2}"#).unwrap();
    assert!(ExperimentConfig::load(Preset::Desk, Some(&path)).is_err());
}

fn random_logits(rng: &mut Rng, n: usize) -> (Tensor, Vec<usize>) {
    let data: Vec<f64> = (0..n * 10).map(|_| 3.0 * rng.normal()).collect();
    let labels = (0..n).map(|_| rng.below(10)).collect();
    (Tensor::new(vec![n, 10], data).unwrap(), labels)
}

#[test]
fn unit_temperature_grid_reproduces_auroc() {
    let mut rng = Rng::new(9);
    let nets: Vec<_> = (0..3).map(|_| random_logits(&mut rng, 120)).collect();
    let rows = temperature_table(&nets, &[1.0], None).unwrap();
    let direct: Vec<f64> = nets
        .iter()
        .map(|(l, y)| {
            let s = softmax_results(l);
            let correct: Vec<bool> = s.iter().zip(y).map(|(r, &y)| r.prediction == y).collect();
            auroc2(&s.iter().map(|r| r.margin).collect::<Vec<_>>(), &correct).unwrap()
        })
        .collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].auroc2_mean, direct.iter().sum::<f64>() / 3.0);
}

#[test]
fn logit_norm_column_scales_inversely_with_temperature() {
    let mut rng = Rng::new(10);
    let nets: Vec<_> = (0..2).map(|_| random_logits(&mut rng, 50)).collect();
    let rows = temperature_table(&nets, &[1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0], Some(7.3)).unwrap();
    let base = rows[0].logit_norm_mean;
    for r in &rows {
        assert!((r.logit_norm_mean - base / r.t).abs() <= 1e-9, "T {}", r.t);
    }
    assert_eq!(rows.iter().filter(|r| r.norm_matched).count(), 1);
    assert!(temperature_table(&nets, &[], None).is_err());
}

fn alpha(alpha_gen: f64, acc: f64) -> AlphaRow {
    AlphaRow { alpha_gen, probe_acc_mean: acc, probe_acc_sd: 0.0, energy_margin_mean: 1.5e-4, selected: false }
}

#[test]
fn alpha_selection_rule() {
    assert_eq!(select_alpha(&[alpha(1e-3, 0.5)], 1e-5, 0.01).unwrap(), 1e-3);
    let close = [alpha(1e-3, 0.781), alpha(1e-4, 0.780), alpha(1e-5, 0.779), alpha(1e-6, 0.780)];
    assert_eq!(select_alpha(&close, 1e-5, 0.01).unwrap(), 1e-5);
    let far = [alpha(1e-3, 0.80), alpha(1e-5, 0.75)];
    assert_eq!(select_alpha(&far, 1e-5, 0.01).unwrap(), 1e-3);
    assert!(select_alpha(&[], 1e-5, 0.01).is_err());
}
