//! Forward/backward for the encoder's conv blocks and the generator's top layer.

use crate::error::Result;
use crate::ops::batchnorm::{self, BnStats};
use crate::ops::{conv, gelu, interp, pool};
use crate::tensor::Tensor;

/// conv3x3 → batch-norm with fixed statistics → GELU → maxpool2.
pub(crate) struct ConvBlock<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
    pub gamma: &'a Tensor,
    pub beta: &'a Tensor,
    pub stats: &'a BnStats,
}

pub(crate) struct ConvBlockCache {
    pre_norm: Tensor,
    pre_act: Tensor,
    pool_idx: Vec<u32>,
    act_shape: Vec<usize>,
}

pub(crate) struct ConvBlockGrads {
    pub weight: Tensor,
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ConvBlock<'_> {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvBlockCache)> {
        let pre_norm = conv::forward(x, self.weight, self.bias)?;
        let pre_act = batchnorm::forward_with_stats(&pre_norm, self.gamma, self.beta, self.stats)?;
        let act = gelu::forward(&pre_act);
        let (out, pool_idx) = pool::forward(&act)?;
        let act_shape = act.shape().to_vec();
        Ok((out, ConvBlockCache { pre_norm, pre_act, pool_idx, act_shape }))
    }

    /// Backpropagates `upstream` (shaped like the block output). Parameter
    /// gradients are scaled by `scale`.
    pub fn backward(
        &self,
        x: &Tensor,
        cache: &ConvBlockCache,
        upstream: &Tensor,
        want_input: bool,
        want_params: Option<f64>,
    ) -> Result<(Option<Tensor>, Option<ConvBlockGrads>)> {
        let d_act = pool::backward(upstream, &cache.pool_idx, &cache.act_shape)?;
        let d_pre_act = gelu::backward(&cache.pre_act, &d_act)?;
        let (d_pre_norm, d_gamma, d_beta) =
            batchnorm::backward_with_stats(&cache.pre_norm, &d_pre_act, self.gamma, self.stats)?;
        let grads = match want_params {
            Some(scale) => {
                let mut weight = Tensor::zeros(self.weight.shape());
                let mut bias = Tensor::zeros(self.bias.shape());
                conv::backward_params(x, &d_pre_norm, &mut weight, &mut bias, scale)?;
                let (mut gamma, mut beta) = (d_gamma, d_beta);
                gamma.scale(scale);
                beta.scale(scale);
                Some(ConvBlockGrads { weight, bias, gamma, beta })
            }
            None => None,
        };
        let dx = if want_input { Some(conv::backward_input(&d_pre_norm, self.weight, x.shape())?) } else { None };
        Ok((dx, grads))
    }
}

/// interp2_nearest → conv3x3, applied to an already-activated input.
pub(crate) fn upconv_forward(fx: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Tensor, Tensor)> {
    let up = interp::forward(fx)?;
    let out = conv::forward(&up, weight, bias)?;
    Ok((out, up))
}
