//! Row-wise softmax over the last axis of an `N x K` tensor.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn softmax_row(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// `log softmax(z)` computed stably.
pub fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn forward(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return shape_err("softmax", format!("expects NxK, got {:?}", x.shape()));
    }
    let k = x.dim(1);
    let mut y = Tensor::zeros(x.shape());
    for (zi, yi) in x.data().chunks_exact(k).zip(y.data_mut().chunks_exact_mut(k)) {
        softmax_row(zi, yi);
    }
    Ok(y)
}

/// VJP given the forward output `p`: `p * (dy - <p, dy>)` per row.
pub fn backward(p: &Tensor, dy: &Tensor) -> Result<Tensor> {
    dy.expect_shape("softmax", p.shape())?;
    let k = p.dim(1);
    let mut dx = Tensor::zeros(p.shape());
    for ((pi, gi), di) in p
        .data()
        .chunks_exact(k)
        .zip(dy.data().chunks_exact(k))
        .zip(dx.data_mut().chunks_exact_mut(k))
    {
        let dot: f64 = pi.iter().zip(gi).map(|(a, b)| a * b).sum();
        for j in 0..k {
            di[j] = pi[j] * (gi[j] - dot);
        }
    }
    Ok(dx)
}
