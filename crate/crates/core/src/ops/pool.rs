//! 2x2 max pooling, stride 2. Ties go to the first window element in row-major order.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Pooled output plus, per output element, the flat input index of its maximum.
pub fn forward(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let s = x.shape();
    if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
        return shape_err("maxpool2", format!("expects NxCxHxW with even H,W, got {s:?}"));
    }
    let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[s[0], s[1], oh, ow]);
    let mut idx = vec![0u32; nc * oh * ow];
    let xd = x.data();
    let od = out.data_mut();
    for p in 0..nc {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let cands = [
                    base + 2 * i * w + 2 * j,
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ];
                let mut best = cands[0];
                for &c in &cands[1..] {
                    if xd[c] > xd[best] {
                        best = c;
                    }
                }
                let o = (p * oh + i) * ow + j;
                od[o] = xd[best];
                idx[o] = best as u32;
            }
        }
    }
    Ok((out, idx))
}

pub fn backward(dy: &Tensor, idx: &[u32], in_shape: &[usize]) -> Result<Tensor> {
    if dy.len() != idx.len() {
        return shape_err("maxpool2", format!("upstream {:?} vs {} pooled outputs", dy.shape(), idx.len()));
    }
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for (&i, &g) in idx.iter().zip(dy.data()) {
        dxd[i as usize] += g;
    }
    Ok(dx)
}
