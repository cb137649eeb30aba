//! Nearest-neighbour 2x upsampling.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn forward(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return shape_err("interp2_nearest", format!("expects NxCxHxW, got {s:?}"));
    }
    let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
    let mut y = Tensor::zeros(&[s[0], s[1], 2 * h, 2 * w]);
    let yd = y.data_mut();
    for p in 0..nc {
        for i in 0..2 * h {
            for j in 0..2 * w {
                yd[(p * 2 * h + i) * 2 * w + j] = x.data()[(p * h + i / 2) * w + j / 2];
            }
        }
    }
    Ok(y)
}

pub fn backward(dy: &Tensor, in_shape: &[usize]) -> Result<Tensor> {
    if in_shape.len() != 4 {
        return shape_err("interp2_nearest", format!("expects NxCxHxW, got {in_shape:?}"));
    }
    let (h, w) = (in_shape[2], in_shape[3]);
    dy.expect_shape("interp2_nearest", &[in_shape[0], in_shape[1], 2 * h, 2 * w])?;
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for p in 0..in_shape[0] * in_shape[1] {
        for i in 0..2 * h {
            for j in 0..2 * w {
                dxd[(p * h + i / 2) * w + j / 2] += dy.data()[(p * 2 * h + i) * 2 * w + j];
            }
        }
    }
    Ok(dx)
}
