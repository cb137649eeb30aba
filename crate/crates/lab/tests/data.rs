use pclab::config::{Normalization, SynthConfig};
use pclab::data::{parse_batch, synth_dataset, NormConstants, RawSplit, BATCH_BYTES, BATCH_RECORDS, CHANNELS, CLASSES, PIXELS, RECORD_BYTES, SIDE};

fn synth(snr: f64, seed: u64, train: usize, test: usize) -> (RawSplit, RawSplit) {
    synth_dataset(&SynthConfig { seed, snr, test_size: test }, train, CLASSES).unwrap()
}

fn features(raw: &RawSplit) -> Vec<Vec<f64>> {
    (0..raw.len()).map(|i| raw.image(i).iter().map(|&b| (b as f64 - 128.0) / 32.0).collect()).collect()
}

/// Multinomial logistic regression by full-batch gradient descent; returns the weights.
fn fit_logistic(x: &[Vec<f64>], y: &[usize], epochs: usize, lr: f64) -> Vec<Vec<f64>> {
    let d = x[0].len() + 1;
    let mut w = vec![vec![0.0; d]; CLASSES];
    for _ in 0..epochs {
        let mut g = vec![vec![0.0; d]; CLASSES];
        for (xi, &yi) in x.iter().zip(y) {
            let p = softmax(&w, xi);
            for k in 0..CLASSES {
                let e = p[k] - if k == yi { 1.0 } else { 0.0 };
                for j in 0..d - 1 {
                    g[k][j] += e * xi[j];
                }
                g[k][d - 1] += e;
            }
        }
        for k in 0..CLASSES {
            for j in 0..d {
                w[k][j] -= lr * g[k][j] / x.len() as f64;
            }
        }
    }
    w
}

fn softmax(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let z: Vec<f64> = w.iter().map(|wk| wk[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + wk[d]).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn accuracy(w: &[Vec<f64>], x: &[Vec<f64>], y: &[usize]) -> f64 {
    let hits = x
        .iter()
        .zip(y)
        .filter(|(xi, &yi)| {
            let p = softmax(w, xi);
            (0..CLASSES).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap() == yi
        })
        .count();
    hits as f64 / y.len() as f64
}

fn batch_bytes(label: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut bytes = vec![0u8; BATCH_BYTES];
    for i in 0..BATCH_RECORDS {
        bytes[i * RECORD_BYTES] = label(i);
        bytes[i * RECORD_BYTES + 1] = (i % 256) as u8;
    }
    bytes
}

#[test]
fn batch_parses_to_ten_thousand_records() {
    let raw = parse_batch(&batch_bytes(|i| (i % 10) as u8), "test_batch.bin").unwrap();
    assert_eq!(raw.len(), 10_000);
    assert_eq!(raw.labels[..3], [0, 1, 2]);
    assert_eq!(raw.image(3)[0], 3);
    assert_eq!(raw.head(1_280).len(), 1_280);
}

#[test]
fn batch_rejects_wrong_length_with_byte_counts() {
    let mut bytes = batch_bytes(|_| 0);
    bytes.pop();
    let err = parse_batch(&bytes, "data_batch_1.bin").unwrap_err().to_string();
    assert!(err.contains("30729999 bytes") && err.contains("30730000"), "{err}");
    assert!(err.contains("9999 whole records"), "{err}");
    assert!(parse_batch(&[], "empty").is_err());
}

#[test]
fn batch_rejects_label_above_nine() {
    let bytes = batch_bytes(|i| if i == 7 { 10 } else { 3 });
    let err = parse_batch(&bytes, "b").unwrap_err().to_string();
    assert!(err.contains("record 7") && err.contains("label 10"), "{err}");
}

#[test]
fn pm1_maps_byte_endpoints() {
    let k = NormConstants::fit(Normalization::Pm1, &synth(1.0, 1, 10, 10).0).unwrap();
    assert_eq!(k.apply(0, 0), -1.0);
    assert_eq!(k.apply(255, 2), 1.0);
}

#[test]
fn standardization_gives_zero_mean_unit_sd_on_train() {
    let (train, _) = synth(1.0, 3, 200, 10);
    let k = NormConstants::fit(Normalization::UnitStandardized, &train).unwrap();
    let data = k.dataset(&train).unwrap();
    let plane = SIDE * SIDE;
    for c in 0..CHANNELS {
        let v: Vec<f64> = (0..train.len()).flat_map(|i| data.images.row(i)[c * plane..(c + 1) * plane].to_vec()).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        assert!(m.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6, "channel {c}: mean {m}, sd {sd}");
    }
}

#[test]
fn synthetic_data_is_deterministic() {
    let a = synth(1.0, 11, 300, 50);
    let b = synth(1.0, 11, 300, 50);
    assert_eq!(a, b);
    assert_ne!(a.0.pixels, synth(1.0, 12, 300, 50).0.pixels);
    assert_eq!(a.0.pixels.len(), 300 * PIXELS);
    assert!(synth_dataset(&SynthConfig { seed: 1, snr: 1.0, test_size: 5 }, 9, CLASSES).is_err());
}

#[test]
fn synthetic_high_snr_is_linearly_separable() {
    let (train, _) = synth(1.0, 5, 512, 10);
    let x = features(&train);
    let w = fit_logistic(&x, &train.labels, 30, 0.05);
    let acc = accuracy(&w, &x, &train.labels);
    assert!(acc > 0.9, "train accuracy {acc}");
}

#[test]
fn synthetic_zero_snr_is_at_chance() {
    let (train, test) = synth(0.0, 5, 512, 2_000);
    let w = fit_logistic(&features(&train), &train.labels, 30, 0.05);
    let acc = accuracy(&w, &features(&test), &test.labels);
    assert!((acc - 0.1).abs() <= 0.05, "held-out accuracy {acc}");
}
