//! The seven layer primitives, each with an analytic forward pass and
//! vector-Jacobian product.
//!
//! The submodules expose allocation-light kernels used directly by the model;
//! [`primitive_forward`] and [`primitive_vjp`] are the uniform entry points.

pub mod batchnorm;
pub mod conv;
pub mod gelu;
pub mod interp;
pub mod linear;
pub mod pool;
pub mod softmax;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;
use batchnorm::BnStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Linear,
    Conv3x3Pad1,
    BatchNorm,
    Gelu,
    Maxpool2,
    Interp2Nearest,
    Softmax,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 7] = [
        PrimitiveKind::Linear,
        PrimitiveKind::Conv3x3Pad1,
        PrimitiveKind::BatchNorm,
        PrimitiveKind::Gelu,
        PrimitiveKind::Maxpool2,
        PrimitiveKind::Interp2Nearest,
        PrimitiveKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Linear => "linear",
            PrimitiveKind::Conv3x3Pad1 => "conv3x3_pad1",
            PrimitiveKind::BatchNorm => "batchnorm",
            PrimitiveKind::Gelu => "gelu",
            PrimitiveKind::Maxpool2 => "maxpool2",
            PrimitiveKind::Interp2Nearest => "interp2_nearest",
            PrimitiveKind::Softmax => "softmax",
        }
    }

    /// Number of tensor inputs the kind takes in `mode`.
    pub fn arity(self, mode: Mode) -> usize {
        match (self, mode) {
            (PrimitiveKind::Linear | PrimitiveKind::Conv3x3Pad1, _) => 3,
            (PrimitiveKind::BatchNorm, Mode::Train) => 3,
            (PrimitiveKind::BatchNorm, Mode::Eval) => 5,
            _ => 1,
        }
    }

    /// Number of differentiable inputs (leading entries of the input list).
    pub fn differentiable(self) -> usize {
        match self {
            PrimitiveKind::Linear | PrimitiveKind::Conv3x3Pad1 | PrimitiveKind::BatchNorm => 3,
            _ => 1,
        }
    }
}

/// Batch-norm statistics source: the batch itself, or stored running averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

fn check_arity(kind: PrimitiveKind, inputs: &[&Tensor], mode: Mode) -> Result<()> {
    let want = kind.arity(mode);
    if inputs.len() != want {
        return shape_err(
            "primitive",
            format!("{} takes {want} inputs in {mode:?} mode, got {}", kind.name(), inputs.len()),
        );
    }
    Ok(())
}

fn eval_stats(mean: &Tensor, var: &Tensor) -> BnStats {
    BnStats { mean: mean.data().to_vec(), var: var.data().to_vec() }
}

/// Input conventions:
/// - `linear`: `[x, weight (out x in), bias]`
/// - `conv3x3_pad1`: `[x (NxCxHxW), weight (OxCx3x3), bias]`
/// - `batchnorm`: `[x, gamma, beta]`, plus `[running_mean, running_var]` in eval mode
/// - all others: `[x]`
pub fn primitive_forward(kind: PrimitiveKind, inputs: &[&Tensor], mode: Mode) -> Result<Tensor> {
    check_arity(kind, inputs, mode)?;
    match kind {
        PrimitiveKind::Linear => linear::forward(inputs[0], inputs[1], inputs[2]),
        PrimitiveKind::Conv3x3Pad1 => conv::forward(inputs[0], inputs[1], inputs[2]),
        PrimitiveKind::BatchNorm => match mode {
            Mode::Train => Ok(batchnorm::forward_train(inputs[0], inputs[1], inputs[2])?.0),
            Mode::Eval => batchnorm::forward_with_stats(
                inputs[0],
                inputs[1],
                inputs[2],
                &eval_stats(inputs[3], inputs[4]),
            ),
        },
        PrimitiveKind::Gelu => Ok(gelu::forward(inputs[0])),
        PrimitiveKind::Maxpool2 => Ok(pool::forward(inputs[0])?.0),
        PrimitiveKind::Interp2Nearest => interp::forward(inputs[0]),
        PrimitiveKind::Softmax => softmax::forward(inputs[0]),
    }
}

/// Returns one gradient per differentiable input, in input order.
pub fn primitive_vjp(kind: PrimitiveKind, inputs: &[&Tensor], upstream: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
    let out = primitive_forward(kind, inputs, mode)?;
    if out.shape() != upstream.shape() {
        return shape_err(
            "primitive",
            format!("{}: upstream {:?} != output {:?}", kind.name(), upstream.shape(), out.shape()),
        );
    }
    let x = inputs[0];
    Ok(match kind {
        PrimitiveKind::Linear => {
            let (w, b) = (inputs[1], inputs[2]);
            let dx = linear::backward_input(upstream, w, x.shape())?;
            let (mut dw, mut db) = (Tensor::zeros(w.shape()), Tensor::zeros(b.shape()));
            linear::backward_params(x, upstream, &mut dw, &mut db, 1.0)?;
            vec![dx, dw, db]
        }
        PrimitiveKind::Conv3x3Pad1 => {
            let (w, b) = (inputs[1], inputs[2]);
            let dx = conv::backward_input(upstream, w, x.shape())?;
            let (mut dw, mut db) = (Tensor::zeros(w.shape()), Tensor::zeros(b.shape()));
            conv::backward_params(x, upstream, &mut dw, &mut db, 1.0)?;
            vec![dx, dw, db]
        }
        PrimitiveKind::BatchNorm => {
            let (dx, dg, db) = match mode {
                Mode::Train => batchnorm::backward_train(x, upstream, inputs[1])?,
                Mode::Eval => {
                    batchnorm::backward_with_stats(x, upstream, inputs[1], &eval_stats(inputs[3], inputs[4]))?
                }
            };
            vec![dx, dg, db]
        }
        PrimitiveKind::Gelu => vec![gelu::backward(x, upstream)?],
        PrimitiveKind::Maxpool2 => {
            let (_, idx) = pool::forward(x)?;
            vec![pool::backward(upstream, &idx, x.shape())?]
        }
        PrimitiveKind::Interp2Nearest => vec![interp::backward(upstream, x.shape())?],
        PrimitiveKind::Softmax => vec![softmax::backward(&out, upstream)?],
    })
}
