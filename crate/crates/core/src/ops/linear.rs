//! Fully connected layer `y = x W^T + b`, with `W` stored `out x in`.

use crate::error::{shape_err, Result};
use crate::gemm::{gemm, Op};
use crate::tensor::Tensor;

fn dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize)> {
    if w.rank() != 2 || x.rank() < 2 {
        return shape_err("linear", format!("input {:?}, weight {:?}", x.shape(), w.shape()));
    }
    let (out, inp) = (w.dim(0), w.dim(1));
    if x.row_len() != inp {
        return shape_err(
            "linear",
            format!("input features {} != weight in-dim {inp} (input {:?})", x.row_len(), x.shape()),
        );
    }
    Ok((x.dim(0), inp, out))
}

/// Trailing input dimensions are flattened.
pub fn forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, inp, out) = dims(x, w)?;
    b.expect_shape("linear", &[out])?;
    let mut y = Tensor::from_fn(&[n, out], |i| b.data()[i % out]);
    gemm(Op::N, Op::T, n, inp, out, 1.0, x.data(), w.data(), 1.0, y.data_mut());
    Ok(y)
}

/// Gradient w.r.t. the input, shaped like `in_shape`.
pub fn backward_input(dy: &Tensor, w: &Tensor, in_shape: &[usize]) -> Result<Tensor> {
    let (out, inp) = (w.dim(0), w.dim(1));
    let n = in_shape[0];
    dy.expect_shape("linear", &[n, out])?;
    let mut dx = Tensor::zeros(in_shape);
    if dx.row_len() != inp {
        return shape_err("linear", format!("input shape {in_shape:?} vs in-dim {inp}"));
    }
    gemm(Op::N, Op::N, n, out, inp, 1.0, dy.data(), w.data(), 0.0, dx.data_mut());
    Ok(dx)
}

/// Accumulates `scale * dW` and `scale * db` into the given buffers.
pub fn backward_params(x: &Tensor, dy: &Tensor, dw: &mut Tensor, db: &mut Tensor, scale: f64) -> Result<()> {
    let (n, inp, out) = dims(x, dw)?;
    dy.expect_shape("linear", &[n, out])?;
    gemm(Op::T, Op::N, out, n, inp, scale, dy.data(), x.data(), 1.0, dw.data_mut());
    let dbd = db.data_mut();
    for row in dy.data().chunks_exact(out) {
        for (d, &g) in dbd.iter_mut().zip(row) {
            *d += scale * g;
        }
    }
    Ok(())
}
