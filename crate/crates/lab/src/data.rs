//! CIFAR-10 binary ingestion, the synthetic fallback and normalisation.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use pclab_core::model::Dataset;
use pclab_core::rng::{Rng, Stream};
use pclab_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Normalization, SynthConfig};

pub const CLASSES: usize = 10;
pub const CHANNELS: usize = 3;
pub const SIDE: usize = 32;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_BYTES: usize = 1 + PIXELS;
pub const BATCH_RECORDS: usize = 10_000;
pub const BATCH_BYTES: usize = RECORD_BYTES * BATCH_RECORDS;
pub const TRAIN_FILES: [&str; 5] = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const TEST_FILE: &str = "test_batch.bin";

/// Images as channel-major bytes, one `PIXELS` block per example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSplit {
    pub pixels: Vec<u8>,
    pub labels: Vec<usize>,
}

impl RawSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` examples.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { pixels: self.pixels[..n * PIXELS].to_vec(), labels: self.labels[..n].to_vec() }
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// SHA-256 over labels then pixels.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.labels.iter().map(|&l| l as u8).collect::<Vec<_>>());
        h.update(&self.pixels);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses one CIFAR-10 binary batch: 10,000 records of a label byte and 3,072 pixel bytes.
pub fn parse_batch(bytes: &[u8], name: &str) -> Result<RawSplit> {
    if bytes.len() != BATCH_BYTES {
        bail!(
            "{name}: {} bytes, expected {BATCH_BYTES} ({BATCH_RECORDS} records of {RECORD_BYTES}); {} whole records and {} trailing bytes",
            bytes.len(),
            bytes.len() / RECORD_BYTES,
            bytes.len() % RECORD_BYTES
        );
    }
    let mut split = RawSplit { pixels: Vec::with_capacity(BATCH_RECORDS * PIXELS), labels: Vec::with_capacity(BATCH_RECORDS) };
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if rec[0] as usize >= CLASSES {
            bail!("{name}: record {i} (byte offset {}) has label {}", i * RECORD_BYTES, rec[0]);
        }
        split.labels.push(rec[0] as usize);
        split.pixels.extend_from_slice(&rec[1..]);
    }
    Ok(split)
}

fn read_batch(dir: &Path, name: &str) -> Result<RawSplit> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    parse_batch(&bytes, name)
}

/// The five training batches (in order) and the test batch.
pub fn load_cifar10_raw(dir: &Path) -> Result<(RawSplit, RawSplit)> {
    let mut train = RawSplit { pixels: Vec::new(), labels: Vec::new() };
    for name in TRAIN_FILES {
        let b = read_batch(dir, name)?;
        train.pixels.extend(b.pixels);
        train.labels.extend(b.labels);
    }
    Ok((train, read_batch(dir, TEST_FILE)?))
}

/// Per-channel affine map from bytes to model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub mode: Normalization,
    /// Channel means of the [0, 1]-scaled training pixels (standardisation only).
    pub mean: [f64; CHANNELS],
    /// Channel population SDs of the [0, 1]-scaled training pixels (standardisation only).
    pub sd: [f64; CHANNELS],
}

impl NormConstants {
    pub fn fit(mode: Normalization, train: &RawSplit) -> Result<Self> {
        match mode {
            Normalization::Pm1 => Ok(Self { mode, mean: [0.0; CHANNELS], sd: [1.0; CHANNELS] }),
            Normalization::UnitStandardized => {
                ensure!(!train.is_empty(), "cannot standardise an empty training split");
                let plane = SIDE * SIDE;
                let count = (train.len() * plane) as f64;
                let mut mean = [0.0; CHANNELS];
                let mut sd = [0.0; CHANNELS];
                for c in 0..CHANNELS {
                    let values = || (0..train.len()).flat_map(move |i| train.image(i)[c * plane..(c + 1) * plane].iter().map(|&b| b as f64 / 255.0));
                    mean[c] = values().sum::<f64>() / count;
                    sd[c] = (values().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / count).sqrt();
                    ensure!(sd[c] > 0.0, "channel {c} is constant in the training split");
                }
                Ok(Self { mode, mean, sd })
            }
        }
    }

    pub fn apply(&self, byte: u8, channel: usize) -> f64 {
        match self.mode {
            Normalization::Pm1 => byte as f64 / 127.5 - 1.0,
            Normalization::UnitStandardized => (byte as f64 / 255.0 - self.mean[channel]) / self.sd[channel],
        }
    }

    pub fn dataset(&self, raw: &RawSplit) -> Result<Dataset> {
        let plane = SIDE * SIDE;
        let data: Vec<f64> = raw.pixels.iter().enumerate().map(|(i, &b)| self.apply(b, (i / plane) % CHANNELS)).collect();
        let images = Tensor::new(vec![raw.len(), CHANNELS, SIDE, SIDE], data)?;
        Ok(Dataset::new(images, raw.labels.clone(), CLASSES)?)
    }
}

/// Normalised CIFAR-10 train and test sets with the constants fitted on the training split.
pub fn load_cifar10(dir: &Path, mode: Normalization) -> Result<(Dataset, Dataset, NormConstants)> {
    let (train, test) = load_cifar10_raw(dir)?;
    let k = NormConstants::fit(mode, &train)?;
    Ok((k.dataset(&train)?, k.dataset(&test)?, k))
}

/// Smooth unit-RMS pattern per class and channel: a sum of low-frequency cosines.
fn prototypes(rng: &mut Rng, classes: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| {
            let mut p = vec![0.0; PIXELS];
            for c in 0..CHANNELS {
                for _ in 0..4 {
                    let (fx, fy) = (rng.below(4) as f64 + 1.0, rng.below(4) as f64);
                    let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
                    let amp = rng.uniform(0.5, 1.0);
                    for y in 0..SIDE {
                        for x in 0..SIDE {
                            let arg = 2.0 * std::f64::consts::PI * (fx * x as f64 + fy * y as f64) / SIDE as f64 + phase;
                            p[(c * SIDE + y) * SIDE + x] += amp * arg.cos();
                        }
                    }
                }
            }
            let rms = (p.iter().map(|v| v * v).sum::<f64>() / PIXELS as f64).sqrt();
            p.iter_mut().for_each(|v| *v /= rms);
            p
        })
        .collect()
}

/// Pixel-noise SD and byte scale of the rendered images.
const RENDER_SCALE: f64 = 32.0;

/// Gaussian class blobs: each example is `snr · P_y + N(0, 1)` per pixel,
/// rendered as `128 + 32·value` clamped to bytes. Returns train and test splits
/// drawn from one generator stream, so the bytes depend only on `cfg`.
pub fn synth_dataset(cfg: &SynthConfig, train_size: usize, classes: usize) -> Result<(RawSplit, RawSplit)> {
    ensure!(classes >= 2 && classes <= 256, "synthetic data needs 2..=256 classes");
    ensure!(train_size >= classes, "synthetic train size {train_size} below the class count {classes}");
    let mut rng = Rng::new(cfg.seed).stream(Stream::Synthetic);
    let protos = prototypes(&mut rng, classes);
    let mut split = |n: usize| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        rng.shuffle(&mut labels);
        let mut pixels = Vec::with_capacity(n * PIXELS);
        for &y in &labels {
            for j in 0..PIXELS {
                let v = cfg.snr * protos[y][j] + rng.normal();
                pixels.push((128.0 + RENDER_SCALE * v).round().clamp(0.0, 255.0) as u8);
            }
        }
        RawSplit { pixels, labels }
    };
    let train = split(train_size);
    let test = split(cfg.test_size);
    Ok((train, test))
}
