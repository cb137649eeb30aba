//! Per-channel batch normalisation over `N x C [x H x W]` inputs.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub const EPS: f64 = 1e-5;
pub const MOMENTUM: f64 = 0.1;

/// Per-channel mean and (biased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }
}

/// (batch, channels, spatial size)
fn layout(x_shape: &[usize], gamma: &Tensor) -> Result<(usize, usize, usize)> {
    if x_shape.len() != 2 && x_shape.len() != 4 {
        return shape_err("batchnorm", format!("input must be NxC or NxCxHxW, got {x_shape:?}"));
    }
    let c = x_shape[1];
    if gamma.shape() != [c] {
        return shape_err("batchnorm", format!("scale {:?} vs {c} channels", gamma.shape()));
    }
    let spatial = x_shape[2..].iter().product();
    Ok((x_shape[0], c, spatial))
}

fn for_each_channel(x: &[f64], n: usize, c: usize, s: usize, mut f: impl FnMut(usize, &[f64])) {
    for i in 0..n {
        for ch in 0..c {
            f(ch, &x[(i * c + ch) * s..][..s]);
        }
    }
}

pub fn batch_stats(x: &Tensor, channels: usize) -> Result<BnStats> {
    let (n, c, s) = layout(x.shape(), &Tensor::zeros(&[channels]))?;
    let m = (n * s) as f64;
    let mut mean = vec![0.0; c];
    for_each_channel(x.data(), n, c, s, |ch, v| mean[ch] += v.iter().sum::<f64>());
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; c];
    for_each_channel(x.data(), n, c, s, |ch, v| {
        var[ch] += v.iter().map(|a| (a - mean[ch]).powi(2)).sum::<f64>();
    });
    var.iter_mut().for_each(|v| *v /= m);
    Ok(BnStats { mean, var })
}

/// Running-average update; the running variance uses the unbiased batch variance.
pub fn update_running(running: &mut BnStats, batch: &BnStats, count: usize) {
    let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
    for ch in 0..running.mean.len() {
        running.mean[ch] = (1.0 - MOMENTUM) * running.mean[ch] + MOMENTUM * batch.mean[ch];
        running.var[ch] = (1.0 - MOMENTUM) * running.var[ch] + MOMENTUM * batch.var[ch] * unbias;
    }
}

/// Normalises with fixed statistics (eval mode, or frozen train statistics).
pub fn forward_with_stats(x: &Tensor, gamma: &Tensor, beta: &Tensor, stats: &BnStats) -> Result<Tensor> {
    let (n, c, s) = layout(x.shape(), gamma)?;
    let mut y = x.clone();
    let yd = y.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (stats.var[ch] + EPS).sqrt();
            let (g, b, mu) = (gamma.data()[ch], beta.data()[ch], stats.mean[ch]);
            for v in &mut yd[(i * c + ch) * s..][..s] {
                *v = g * (*v - mu) * inv + b;
            }
        }
    }
    Ok(y)
}

/// Gradients for fixed statistics: `(dx, dgamma, dbeta)`.
pub fn backward_with_stats(
    x: &Tensor,
    dy: &Tensor,
    gamma: &Tensor,
    stats: &BnStats,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, s) = layout(x.shape(), gamma)?;
    dy.expect_shape("batchnorm", x.shape())?;
    let mut dx = dy.clone();
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for i in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (stats.var[ch] + EPS).sqrt();
            let off = (i * c + ch) * s;
            let xs = &x.data()[off..off + s];
            let dys = &dy.data()[off..off + s];
            let mut dg = 0.0;
            for (xv, dv) in xs.iter().zip(dys) {
                dg += dv * (xv - stats.mean[ch]) * inv;
            }
            dgamma.data_mut()[ch] += dg;
            dbeta.data_mut()[ch] += dys.iter().sum::<f64>();
            let g = gamma.data()[ch] * inv;
            dx.data_mut()[off..off + s].iter_mut().for_each(|v| *v *= g);
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Train-mode forward: normalises with the batch's own statistics.
pub fn forward_train(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(Tensor, BnStats)> {
    let stats = batch_stats(x, gamma.len())?;
    Ok((forward_with_stats(x, gamma, beta, &stats)?, stats))
}

/// Train-mode gradients, differentiating through the batch statistics.
pub fn backward_train(x: &Tensor, dy: &Tensor, gamma: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, s) = layout(x.shape(), gamma)?;
    dy.expect_shape("batchnorm", x.shape())?;
    let stats = batch_stats(x, c)?;
    let m = (n * s) as f64;
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    let inv: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + EPS).sqrt()).collect();
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * s;
            for (xv, dv) in x.data()[off..off + s].iter().zip(&dy.data()[off..off + s]) {
                sum_dy[ch] += dv;
                sum_dy_xhat[ch] += dv * (xv - stats.mean[ch]) * inv[ch];
            }
        }
    }
    let mut dx = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * s;
            let k = gamma.data()[ch] * inv[ch] / m;
            for j in off..off + s {
                let xhat = (x.data()[j] - stats.mean[ch]) * inv[ch];
                dx.data_mut()[j] = k * (m * dy.data()[j] - sum_dy[ch] - xhat * sum_dy_xhat[ch]);
            }
        }
    }
    let dgamma = Tensor::new(vec![c], sum_dy_xhat)?;
    let dbeta = Tensor::new(vec![c], sum_dy)?;
    Ok((dx, dgamma, dbeta))
}
