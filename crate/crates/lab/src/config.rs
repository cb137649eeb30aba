//! Experiment configuration: JSON documents layered over a built-in preset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pclab_core::model::{Condition, EnergyConfig};
use pclab_core::AdamWConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Bytes scaled to [0, 1], then standardised per channel with training-split statistics.
    UnitStandardized,
    /// Bytes mapped affinely onto [−1, 1].
    Pm1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Prototype amplitude relative to pixel noise; 0 removes all class signal.
    pub snr: f64,
    /// Test-split size generated alongside the training split.
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with the CIFAR-10 binary batches; synthetic data is used when absent.
    pub dir: Option<PathBuf>,
    /// Leading training examples used, in file order.
    pub train_size: usize,
    /// Leading test examples evaluated by both readouts, in file order.
    pub eval_size: usize,
    pub normalization: BTreeMap<Condition, Normalization>,
    pub synthetic: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha_gen: Vec<f64>,
    pub alpha_seeds: Vec<u64>,
    /// Accuracy band (fraction) inside which the preferred alpha wins the tie-break.
    pub alpha_tie_band: f64,
    pub alpha_preferred: f64,
    pub temperatures: Vec<f64>,
    /// Logit norm the norm-matched temperature aims at; the run's stdPC-MSE mean when absent.
    pub reference_norm: Option<f64>,
    /// AUROC₂ tolerance for "non-increasing up to the plateau".
    pub plateau_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub energy: BTreeMap<Condition, EnergyConfig>,
    pub data: DataConfig,
    pub sweeps: SweepConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full design: 10 seeds, 25 epochs, batch 128, 1,280 evaluation images.
    Full,
    /// Reduced acceptance configuration: 4,000/1,000 images, 5 epochs, 3 seeds.
    Desk,
}

fn default_normalization() -> BTreeMap<Condition, Normalization> {
    Condition::ALL
        .into_iter()
        .map(|c| (c, if c == Condition::Bpc { Normalization::Pm1 } else { Normalization::UnitStandardized }))
        .collect()
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let full = Self {
            conditions: Condition::ALL.to_vec(),
            seeds: (6..=15).collect(),
            epochs: 25,
            batch_size: 128,
            optimizer: AdamWConfig::default(),
            energy: Condition::ALL.into_iter().map(|c| (c, EnergyConfig::for_condition(c))).collect(),
            data: DataConfig {
                dir: None,
                train_size: 50_000,
                eval_size: 1_280,
                normalization: default_normalization(),
                synthetic: SynthConfig { seed: 2024, snr: 0.06, test_size: 10_000 },
            },
            sweeps: SweepConfig {
                alpha_gen: vec![1e-3, 1e-4, 1e-5, 1e-6],
                alpha_seeds: (6..=10).collect(),
                alpha_tie_band: 0.01,
                alpha_preferred: 1e-5,
                temperatures: vec![1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0],
                reference_norm: None,
                plateau_band: 0.002,
            },
            output_dir: PathBuf::from("runs/full"),
        };
        match preset {
            Preset::Full => full,
            Preset::Desk => Self {
                seeds: vec![6, 7, 8],
                epochs: 5,
                batch_size: 32,
                data: DataConfig {
                    train_size: 4_000,
                    eval_size: 1_000,
                    synthetic: SynthConfig { test_size: 2_000, ..full.data.synthetic.clone() },
                    ..full.data.clone()
                },
                sweeps: SweepConfig { alpha_seeds: vec![6, 7, 8], ..full.sweeps.clone() },
                output_dir: PathBuf::from("runs/desk"),
                ..full
            },
        }
    }

    /// Preset overlaid with the JSON document at `path` (objects merge key by key).
    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        let mut base = serde_json::to_value(Self::preset(preset))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let overlay: Value =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut base, overlay);
        }
        let cfg: Self = serde_json::from_value(base).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            bail!("seed list has duplicates: {:?}", self.seeds);
        }
        if self.conditions.is_empty() {
            bail!("no conditions selected");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            bail!("epochs and batch size must be positive");
        }
        for c in &self.conditions {
            let e = self.energy(*c)?;
            e.validate().with_context(|| format!("energy settings for {c}"))?;
            if e.condition != *c {
                bail!("energy settings filed under {c} name condition {}", e.condition);
            }
            self.normalization(*c)?;
        }
        let d = &self.data;
        if d.train_size == 0 || d.eval_size < 2 {
            bail!("train_size must be positive and eval_size at least 2");
        }
        if d.dir.is_none() && d.eval_size > d.synthetic.test_size {
            bail!("eval_size {} exceeds the synthetic test split {}", d.eval_size, d.synthetic.test_size);
        }
        if self.sweeps.temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            bail!("temperature grid must be positive: {:?}", self.sweeps.temperatures);
        }
        Ok(())
    }

    pub fn energy(&self, c: Condition) -> Result<EnergyConfig> {
        self.energy.get(&c).copied().with_context(|| format!("no energy settings for {c}"))
    }

    pub fn normalization(&self, c: Condition) -> Result<Normalization> {
        self.data.normalization.get(&c).copied().with_context(|| format!("no normalization for {c}"))
    }

    /// Canonical JSON used for manifests and fingerprints.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
