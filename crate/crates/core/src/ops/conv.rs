//! 3x3 convolution, padding 1, stride 1, with bias. Weights are `O x C x 3 x 3`.

use crate::error::{shape_err, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::Tensor;

struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
}

fn geom(x_shape: &[usize], w: &Tensor) -> Result<Geom> {
    if x_shape.len() != 4 {
        return shape_err("conv3x3_pad1", format!("input must be NxCxHxW, got {x_shape:?}"));
    }
    let ws = w.shape();
    if ws.len() != 4 || ws[2] != 3 || ws[3] != 3 || ws[1] != x_shape[1] {
        return shape_err(
            "conv3x3_pad1",
            format!("weight {ws:?} incompatible with input channels {}", x_shape[1]),
        );
    }
    Ok(Geom { n: x_shape[0], c: x_shape[1], h: x_shape[2], w: x_shape[3], o: ws[0] })
}

/// Fills `cols` (`C*9 x H*W`) with the padded 3x3 neighbourhoods of one image.
fn im2col(img: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back onto one image gradient.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, img: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

pub fn forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = geom(x.shape(), weight)?;
    bias.expect_shape("conv3x3_pad1", &[g.o])?;
    let (hw, k) = (g.h * g.w, g.c * 9);
    let mut y = Tensor::zeros(&[g.n, g.o, g.h, g.w]);
    let mut cols = vec![0.0; k * hw];
    for i in 0..g.n {
        im2col(x.row(i), g.c, g.h, g.w, &mut cols);
        let out = y.row_mut(i);
        for (oc, b) in bias.data().iter().enumerate() {
            out[oc * hw..(oc + 1) * hw].fill(*b);
        }
        gemm(Op::N, Op::N, g.o, k, hw, 1.0, weight.data(), &cols, 1.0, out);
    }
    Ok(y)
}

pub fn backward_input(dy: &Tensor, weight: &Tensor, in_shape: &[usize]) -> Result<Tensor> {
    let g = geom(in_shape, weight)?;
    dy.expect_shape("conv3x3_pad1", &[g.n, g.o, g.h, g.w])?;
    let (hw, k) = (g.h * g.w, g.c * 9);
    let mut dx = Tensor::zeros(in_shape);
    let mut cols = vec![0.0; k * hw];
    for i in 0..g.n {
        gemm(Op::T, Op::N, k, g.o, hw, 1.0, weight.data(), dy.row(i), 0.0, &mut cols);
        col2im(&cols, g.c, g.h, g.w, dx.row_mut(i));
    }
    Ok(dx)
}

/// Accumulates `scale * dW` and `scale * db`.
pub fn backward_params(x: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor, scale: f64) -> Result<()> {
    let g = geom(x.shape(), dw)?;
    dy.expect_shape("conv3x3_pad1", &[g.n, g.o, g.h, g.w])?;
    let (hw, k) = (g.h * g.w, g.c * 9);
    let mut cols = vec![0.0; k * hw];
    for i in 0..g.n {
        im2col(x.row(i), g.c, g.h, g.w, &mut cols);
        let dyi = dy.row(i);
        gemm(Op::N, Op::T, g.o, hw, k, scale, dyi, &cols, 1.0, dw.data_mut());
        for (oc, d) in db.data_mut().iter_mut().enumerate() {
            *d += scale * dyi[oc * hw..(oc + 1) * hw].iter().sum::<f64>();
        }
    }
    Ok(())
}
