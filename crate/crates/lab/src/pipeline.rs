//! The experiment pipeline: train → probe → evaluate → temperature sweep →
//! report → figures, with per-run artifacts and a manifest of completed stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pclab_core::diagnostics::{
    energy_split, logit_table, movement_check, DecompositionAggregate, MovementRecord,
};
use pclab_core::hypotheses::{hypothesis_suite, SuiteReport};
use pclab_core::metrics::{spearman, EvalRecord, SeedSummary};
use pclab_core::model::latent::feedforward_logits;
use pclab_core::model::train::accuracy;
use pclab_core::model::{build_tinyconv, train, Condition, Dataset, EnergyBreakdown, EnergyConfig, ModelParams, TrainConfig};
use pclab_core::probe::{decomposition_from, kway_probe, softmax_results};
use pclab_core::rng::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::data::{load_cifar10_raw, synth_dataset, NormConstants, RawSplit, CLASSES};
use crate::records::*;

pub const ARTIFACT_VERSION: &str = concat!("pclab ", env!("CARGO_PKG_VERSION"), " artifacts v1");
pub const MANIFEST: &str = "manifest.json";

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Train,
    Probe,
    Eval,
    SweepTemp,
    Report,
    Figures,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Train, Stage::Probe, Stage::Eval, Stage::SweepTemp, Stage::Report, Stage::Figures];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Probe => "probe",
            Stage::Eval => "eval",
            Stage::SweepTemp => "sweep-temp",
            Stage::Report => "report",
            Stage::Figures => "figures",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    /// "cifar10" or "synthetic".
    pub source: String,
    pub train_examples: usize,
    pub test_examples: usize,
    pub eval_examples: usize,
    pub train_sha256: String,
    pub test_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub trained: bool,
    pub probed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub data: DataInfo,
    pub normalization: BTreeMap<Condition, NormConstants>,
    pub runs: BTreeMap<String, RunStatus>,
    pub stages: BTreeMap<Stage, bool>,
    pub wall_clock_seconds: BTreeMap<String, f64>,
    pub complete: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the canonical config JSON with the output directory left out,
/// so the same experiment written to two places shares a fingerprint.
pub fn config_fingerprint(cfg: &ExperimentConfig) -> String {
    let c = ExperimentConfig { output_dir: PathBuf::new(), ..cfg.clone() };
    sha256_hex(c.to_json().as_bytes())
}

pub fn run_id(condition: Condition, seed: u64) -> String {
    format!("{condition}-seed{seed}")
}

/// Raw splits selected by the configuration.
pub struct PreparedData {
    pub train: RawSplit,
    pub test: RawSplit,
    pub info: DataInfo,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (source, train, test) = match &cfg.data.dir {
        Some(dir) => {
            let (train, test) = load_cifar10_raw(dir)?;
            ("cifar10", train, test)
        }
        None => {
            let (train, test) = synth_dataset(&cfg.data.synthetic, cfg.data.train_size, CLASSES)?;
            ("synthetic", train, test)
        }
    };
    if cfg.data.train_size > train.len() {
        bail!("train_size {} exceeds the {} available training examples", cfg.data.train_size, train.len());
    }
    if cfg.data.eval_size > test.len() {
        bail!("eval_size {} exceeds the {} available test examples", cfg.data.eval_size, test.len());
    }
    let train = train.head(cfg.data.train_size);
    let info = DataInfo {
        source: source.into(),
        train_examples: train.len(),
        test_examples: test.len(),
        eval_examples: cfg.data.eval_size,
        train_sha256: train.checksum(),
        test_sha256: test.checksum(),
    };
    Ok(PreparedData { train, test, info })
}

/// Normalised datasets for one condition.
pub struct ConditionData {
    pub train: Dataset,
    pub test: Dataset,
    pub eval: Dataset,
}

/// Checkpoint sidecar describing how a parameter file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub condition: Condition,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub energy: EnergyConfig,
    pub normalization: NormConstants,
    pub parameters: usize,
    pub sha256: String,
}

/// Evaluation outputs derived from the per-run probe files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summaries: Vec<SummaryRow>,
    pub suite: SuiteReport,
    pub decomposition: Vec<DecompositionRow>,
    /// Energy split over every condition's seeds, inputs and hypotheses.
    pub energy_split: BTreeMap<Condition, DecompositionAggregate>,
    pub logit_table: Vec<pclab_core::diagnostics::LogitRow>,
    pub ce_mse_norm_ratio: Option<f64>,
    /// Spearman correlation of probe energy margins with log-softmax margins (stdPC-CE, all classes).
    pub residual_spearman: Option<f64>,
    pub movement: Vec<MovementRow>,
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    data: PreparedData,
    pub manifest: RunManifest,
}

fn stage_err(stage: Stage) -> impl FnOnce() -> String {
    move || format!("stage {} failed", stage.name())
}

impl Pipeline {
    /// Prepares data and opens (or starts) the manifest in `cfg.output_dir`.
    ///
    /// An existing manifest written for a different configuration or dataset is
    /// rejected rather than mixed with.
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        fs::create_dir_all(out.join("runs")).with_context(|| format!("creating {}", out.display()))?;
        let data = prepare_data(&cfg)?;
        let mut normalization = BTreeMap::new();
        for &c in &cfg.conditions {
            normalization.insert(c, NormConstants::fit(cfg.normalization(c)?, &data.train)?);
        }
        let config_sha256 = config_fingerprint(&cfg);
        let fresh = RunManifest {
            artifact_version: ARTIFACT_VERSION.into(),
            config_sha256: config_sha256.clone(),
            config: cfg.clone(),
            data: data.info.clone(),
            normalization,
            runs: BTreeMap::new(),
            stages: Stage::ALL.into_iter().map(|s| (s, false)).collect(),
            wall_clock_seconds: BTreeMap::new(),
            complete: false,
        };
        let path = out.join(MANIFEST);
        let manifest = if path.exists() {
            let old: RunManifest = serde_json::from_str(&fs::read_to_string(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            if old.config_sha256 != config_sha256 || old.data != fresh.data || old.artifact_version != ARTIFACT_VERSION {
                bail!(
                    "{} belongs to a different configuration or dataset; choose another output directory",
                    path.display()
                );
            }
            old
        } else {
            fresh
        };
        let p = Self { cfg, out, data, manifest };
        p.save_manifest()?;
        Ok(p)
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.out.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    fn mark(&mut self, stage: Stage, done: bool) -> Result<()> {
        self.manifest.stages.insert(stage, done);
        self.manifest.complete = self.manifest.stages.values().all(|&d| d);
        self.save_manifest()
    }

    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.mark(stage, false)?;
        let start = Instant::now();
        let out = f(self).with_context(stage_err(stage))?;
        self.manifest.wall_clock_seconds.insert(stage.name().into(), start.elapsed().as_secs_f64());
        self.mark(stage, true)?;
        Ok(out)
    }

    pub fn run_dir(&self, condition: Condition, seed: u64) -> PathBuf {
        self.out.join("runs").join(run_id(condition, seed))
    }

    pub fn condition_data(&self, condition: Condition) -> Result<ConditionData> {
        let k = self.manifest.normalization.get(&condition).with_context(|| format!("no normalization for {condition}"))?;
        Ok(ConditionData {
            train: k.dataset(&self.data.train)?,
            test: k.dataset(&self.data.test)?,
            eval: k.dataset(&self.data.test.head(self.cfg.data.eval_size))?,
        })
    }

    fn runs(&self) -> Vec<(Condition, u64)> {
        let mut conds = self.cfg.conditions.clone();
        conds.sort();
        let mut seeds = self.cfg.seeds.clone();
        seeds.sort_unstable();
        conds.into_iter().flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect()
    }

    fn status(&mut self, condition: Condition, seed: u64) -> &mut RunStatus {
        self.manifest.runs.entry(run_id(condition, seed)).or_default()
    }

    /// Trains every (condition, seed) run that has no checkpoint yet.
    pub fn train(&mut self) -> Result<()> {
        self.timed(Stage::Train, |p| {
            for (condition, seed) in p.runs() {
                if p.status(condition, seed).trained {
                    continue;
                }
                p.train_run(condition, seed).with_context(|| format!("training {}", run_id(condition, seed)))?;
                p.status(condition, seed).trained = true;
                p.save_manifest()?;
            }
            Ok(())
        })
    }

    fn train_run(&self, condition: Condition, seed: u64) -> Result<()> {
        let data = self.condition_data(condition)?;
        let energy = self.cfg.energy(condition)?;
        let tc = TrainConfig { epochs: self.cfg.epochs, batch_size: self.cfg.batch_size, optimizer: self.cfg.optimizer, energy };
        let (_, mut params) = build_tinyconv(&Rng::new(seed))?;
        let id = run_id(condition, seed);
        let start = Instant::now();
        let logs = train(&mut params, &data.train, Some(&data.eval), &tc, seed, |l| {
            eprintln!(
                "[{id}] epoch {} energy {:.6} train acc {:.4} eval acc {:.4} ({:.0}s)",
                l.epoch,
                l.train_energy,
                l.train_accuracy,
                l.test_accuracy.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            )
        })?;
        let dir = self.run_dir(condition, seed);
        fs::create_dir_all(&dir)?;
        let mut bytes = Vec::new();
        params.write_checkpoint(&mut bytes)?;
        fs::write(dir.join("checkpoint.pcml"), &bytes)?;
        let ck = CheckpointManifest {
            condition,
            seed,
            epochs: tc.epochs,
            batch_size: tc.batch_size,
            energy,
            normalization: self.manifest.normalization[&condition],
            parameters: params.parameter_count(),
            sha256: sha256_hex(&bytes),
        };
        fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&ck)? + "\n")?;
        let rows: Vec<TrainLogRow> = logs.iter().map(|l| TrainLogRow::new(seed, condition, l)).collect();
        write_csv(&dir.join("train_log.csv"), &rows)
    }

    pub fn load_checkpoint(&self, condition: Condition, seed: u64) -> Result<ModelParams> {
        let dir = self.run_dir(condition, seed);
        let bytes = fs::read(dir.join("checkpoint.pcml")).with_context(|| format!("no checkpoint for {}", run_id(condition, seed)))?;
        let ck: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json"))?)?;
        if ck.sha256 != sha256_hex(&bytes) {
            bail!("checkpoint {} does not match its manifest checksum", run_id(condition, seed));
        }
        let spec = pclab_core::model::ModelSpec::tinyconv();
        Ok(ModelParams::read_checkpoint(spec, &mut bytes.as_slice())?)
    }

    /// Runs both readouts on the evaluation set for every trained run not yet probed.
    pub fn probe(&mut self) -> Result<()> {
        self.timed(Stage::Probe, |p| {
            for (condition, seed) in p.runs() {
                if p.status(condition, seed).probed {
                    continue;
                }
                p.probe_run(condition, seed).with_context(|| format!("probing {}", run_id(condition, seed)))?;
                p.status(condition, seed).probed = true;
                p.save_manifest()?;
            }
            Ok(())
        })
    }

    fn probe_run(&self, condition: Condition, seed: u64) -> Result<()> {
        let params = self.load_checkpoint(condition, seed)?;
        let data = self.condition_data(condition)?;
        let energy = self.cfg.energy(condition)?;
        let start = Instant::now();
        let logits = feedforward_logits(&params, &data.eval.images, 256)?;
        let soft = softmax_results(&logits);
        let probes = kway_probe(&params, &data.eval.images, &energy)?;
        let full_test = accuracy(&feedforward_logits(&params, &data.test.images, 256)?, &data.test.labels);
        eprintln!("[{}] probed {} inputs ({:.0}s)", run_id(condition, seed), probes.len(), start.elapsed().as_secs_f64());

        let dir = self.run_dir(condition, seed);
        let records: Vec<EvalRecord> = (0..probes.len())
            .map(|i| EvalRecord::new(i, data.eval.labels[i], &soft[i], &probes[i]))
            .collect();
        write_csv(&dir.join("metrics.csv"), &records.iter().map(|r| MetricsRow::new(seed, condition, r)).collect::<Vec<_>>())?;
        let mut energies = Vec::new();
        let mut logit_rows = Vec::new();
        for (i, pr) in probes.iter().enumerate() {
            for (k, b) in pr.breakdowns.iter().enumerate() {
                energies.push(EnergyRow { seed, condition, index: i, hypothesis: k, total: b.total, disc_sum: b.disc_sum, gen_sum: b.gen_sum, output: b.output });
            }
            for (k, &l) in soft[i].logits.iter().enumerate() {
                logit_rows.push(LogitValueRow { seed, condition, index: i, class: k, logit: l });
            }
        }
        write_csv(&dir.join("energies.csv"), &energies)?;
        write_csv(&dir.join("logits.csv"), &logit_rows)?;
        let movement = MovementRecord::from_probes(seed, condition, &probes)?;
        let mrows: Vec<MovementRow> = (0..3)
            .map(|l| MovementRow { seed, condition, layer: l + 1, displacement: movement.layers[l] })
            .collect();
        write_csv(&dir.join("movement.csv"), &mrows)?;
        if condition == Condition::StdPcCe {
            let mut rows = Vec::new();
            for (i, d) in decomposition_from(&probes, &soft)?.iter().enumerate() {
                for k in 0..d.residual.len() {
                    rows.push(ResidualRow {
                        seed,
                        index: i,
                        class: k,
                        energy_margin: d.energy_margin[k],
                        log_softmax_margin: d.log_softmax_margin[k],
                        residual: d.residual[k],
                        energy_margin_second: d.energy_margin_second[k],
                        log_softmax_margin_second: d.log_softmax_margin_second[k],
                        residual_second: d.residual_second[k],
                    });
                }
            }
            write_csv(&dir.join("residuals.csv"), &rows)?;
        }
        fs::write(dir.join("full_test.json"), serde_json::to_string(&serde_json::json!({ "softmax_accuracy": full_test }))? + "\n")?;
        Ok(())
    }

    fn gather<T: serde::de::DeserializeOwned + Serialize>(&self, file: &str, conditions: &[Condition]) -> Result<Vec<T>> {
        let mut all = Vec::new();
        for (c, s) in self.runs() {
            if conditions.contains(&c) {
                all.extend(read_csv::<T>(&self.run_dir(c, s).join(file))?);
            }
        }
        write_csv(&self.out.join(file), &all)?;
        Ok(all)
    }

    /// Merges per-run files and computes summaries, diagnostics and the hypothesis suite.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        self.timed(Stage::Eval, |p| p.evaluate_inner())
    }

    fn evaluate_inner(&self) -> Result<Evaluation> {
        let conds = self.cfg.conditions.clone();
        let metrics: Vec<MetricsRow> = self.gather("metrics.csv", &conds)?;
        let energies: Vec<EnergyRow> = self.gather("energies.csv", &conds)?;
        let _: Vec<LogitValueRow> = self.gather("logits.csv", &conds)?;
        let movement: Vec<MovementRow> = self.gather("movement.csv", &conds)?;
        let residuals: Vec<ResidualRow> = self.gather("residuals.csv", &[Condition::StdPcCe])?;
        let _: Vec<TrainLogRow> = self.gather("train_log.csv", &conds)?;

        let mut summaries = Vec::new();
        for (c, s) in self.runs() {
            let recs: Vec<EvalRecord> = metrics.iter().filter(|r| r.condition == c && r.seed == s).map(MetricsRow::record).collect();
            let summary = SeedSummary::from_records(s, c, &recs).with_context(|| run_id(c, s))?;
            let full: serde_json::Value = serde_json::from_str(&fs::read_to_string(self.run_dir(c, s).join("full_test.json"))?)?;
            let full_acc = full["softmax_accuracy"].as_f64().context("full_test.json lacks softmax_accuracy")?;
            summaries.push(SummaryRow::new(&summary, full_acc));
        }
        write_csv(&self.out.join("summary.csv"), &summaries)?;

        let mut split = BTreeMap::new();
        for &c in &conds {
            let b: Vec<EnergyBreakdown> = energies
                .iter()
                .filter(|e| e.condition == c)
                .map(|e| EnergyBreakdown { total: e.total, disc_sum: e.disc_sum, gen_sum: e.gen_sum, output: e.output, ..Default::default() })
                .collect();
            split.insert(c, energy_split(&b)?);
        }
        let mut decomposition = Vec::new();
        if conds.contains(&Condition::Bpc) {
            for &s in &self.sorted_seeds() {
                let b: Vec<EnergyBreakdown> = energies
                    .iter()
                    .filter(|e| e.condition == Condition::Bpc && e.seed == s)
                    .map(|e| EnergyBreakdown { disc_sum: e.disc_sum, gen_sum: e.gen_sum, ..Default::default() })
                    .collect();
                let a = energy_split(&b)?;
                decomposition.push(DecompositionRow { seed: s, gen_mean: a.gen_mean, disc_mean: a.disc_mean, ratio: a.ratio });
            }
        }
        write_csv(&self.out.join("decomposition.csv"), &decomposition)?;

        let seed_summaries: Vec<SeedSummary> = summaries.iter().map(SummaryRow::summary).collect();
        let table = logit_table(&seed_summaries);
        write_csv(&self.out.join("logit_table.csv"), &table)?;
        let ce_mse_norm_ratio = pclab_core::diagnostics::ce_mse_norm_ratio(&table).ok();

        let records_for = |c: Condition| -> Vec<MovementRecord> {
            self.sorted_seeds()
                .iter()
                .map(|&s| {
                    let mut layers = [0.0; 3];
                    for m in movement.iter().filter(|m| m.condition == c && m.seed == s) {
                        layers[m.layer - 1] = m.displacement;
                    }
                    MovementRecord { seed: s, condition: c, layers }
                })
                .collect()
        };
        let residual_spearman = if residuals.len() >= 2 {
            let m: Vec<f64> = residuals.iter().map(|r| r.energy_margin).collect();
            let l: Vec<f64> = residuals.iter().map(|r| r.log_softmax_margin).collect();
            spearman(&m, &l).ok()
        } else {
            None
        };
        let all_three = Condition::ALL.iter().all(|c| conds.contains(c));
        if !all_three {
            bail!("the hypothesis suite needs all three conditions");
        }
        let check = movement_check(&records_for(Condition::StdPcCe), &records_for(Condition::Bpc))?;
        let suite = hypothesis_suite(&seed_summaries, &check)?;
        fs::write(self.out.join("hypotheses.json"), serde_json::to_string_pretty(&suite)? + "\n")?;

        let eval = Evaluation {
            summaries,
            suite,
            decomposition,
            energy_split: split,
            logit_table: table,
            ce_mse_norm_ratio,
            residual_spearman,
            movement,
        };
        fs::write(self.out.join("evaluation.json"), serde_json::to_string_pretty(&eval)? + "\n")?;
        Ok(eval)
    }

    pub fn sorted_seeds(&self) -> Vec<u64> {
        let mut s = self.cfg.seeds.clone();
        s.sort_unstable();
        s
    }

    pub fn load_evaluation(&self) -> Result<Evaluation> {
        let path = self.out.join("evaluation.json");
        serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("{} missing; run eval first", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))
    }

    pub fn sweep_temperature(&mut self) -> Result<crate::sweeps::TemperatureSweep> {
        self.timed(Stage::SweepTemp, |p| {
            let eval = p.load_evaluation()?;
            let sweep = crate::sweeps::sweep_temperature(p, &eval)?;
            write_csv(&p.out.join("temperature.csv"), &sweep.rows)?;
            fs::write(p.out.join("temperature.json"), serde_json::to_string_pretty(&sweep)? + "\n")?;
            Ok(sweep)
        })
    }

    pub fn load_temperature(&self) -> Result<crate::sweeps::TemperatureSweep> {
        let path = self.out.join("temperature.json");
        serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("{} missing; run sweep-temp first", path.display()))?)
            .with_context(|| format!("parsing {}", path.display()))
    }

    pub fn report(&mut self) -> Result<()> {
        self.timed(Stage::Report, |p| {
            let eval = p.load_evaluation()?;
            let temp = p.load_temperature().ok();
            let text = crate::report::render(&p.cfg, &p.manifest.data, &eval, temp.as_ref());
            fs::write(p.out.join("report.md"), text)?;
            Ok(())
        })
    }

    pub fn figures(&mut self) -> Result<()> {
        self.timed(Stage::Figures, |p| crate::figures::emit_figures(&p.out))
    }

    /// Every stage in order.
    pub fn all(&mut self) -> Result<Evaluation> {
        self.train()?;
        self.probe()?;
        let eval = self.evaluate()?;
        self.sweep_temperature()?;
        self.report()?;
        self.figures()?;
        Ok(eval)
    }

    /// Evaluation-set logits of one run, recomputed from its checkpoint, with labels.
    pub fn eval_logits(&self, condition: Condition, seed: u64) -> Result<(pclab_core::Tensor, Vec<usize>)> {
        let params = self.load_checkpoint(condition, seed)?;
        let data = self.condition_data(condition)?;
        Ok((feedforward_logits(&params, &data.eval.images, 256)?, data.eval.labels))
    }
}
