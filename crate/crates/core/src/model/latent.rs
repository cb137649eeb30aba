use crate::error::{Error, Result};
use crate::ops::batchnorm::{self, BnStats};
use crate::ops::{gelu, linear, Mode};
use crate::tensor::Tensor;

use super::blocks::ConvBlock;
use super::params::ModelParams;
use super::spec::ParamId;

/// Relative-displacement guard in `‖x − x0‖ / (‖x0‖ + ε)`.
pub const DISPLACEMENT_EPS: f64 = 1e-12;

/// Latent activations x1..x4 for a batch, with per-site clamp flags.
///
/// The input image x0 is always clamped. Batch-norm statistics are frozen at
/// construction so the energy is a fixed function of the latents while settling.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    input: Tensor,
    sites: [Tensor; 4],
    clamped: [bool; 4],
    initial: [Tensor; 4],
    norm: [BnStats; 2],
    input_prediction: Tensor,
}

fn site_index(site: usize) -> usize {
    assert!((1..=4).contains(&site), "latent site {site} out of range 1..=4");
    site - 1
}

impl LatentState {
    /// Builds a state from explicit latents; the current values become the cached initial values.
    pub fn from_parts(params: &ModelParams, input: Tensor, sites: [Tensor; 4], norm: [BnStats; 2]) -> Result<Self> {
        let spec = params.spec();
        let n = input.dim(0);
        input.expect_shape("latent state", &spec.input_shape(n))?;
        for (i, s) in sites.iter().enumerate() {
            s.expect_shape("latent state", &spec.site_shape(i + 1, n))?;
        }
        let (input_prediction, _) = block1(params, &norm[0]).forward(&input)?;
        Ok(Self { input, initial: sites.clone(), sites, clamped: [false; 4], norm, input_prediction })
    }

    pub fn batch(&self) -> usize {
        self.input.dim(0)
    }

    pub fn input(&self) -> &Tensor {
        &self.input
    }

    /// Latent site x`site` (1-based).
    pub fn site(&self, site: usize) -> &Tensor {
        &self.sites[site_index(site)]
    }

    pub fn sites(&self) -> &[Tensor; 4] {
        &self.sites
    }

    pub fn initial(&self, site: usize) -> &Tensor {
        &self.initial[site_index(site)]
    }

    pub fn set_site(&mut self, site: usize, value: Tensor) -> Result<()> {
        let i = site_index(site);
        value.expect_shape("latent state", self.sites[i].shape())?;
        self.sites[i] = value;
        Ok(())
    }

    pub fn is_clamped(&self, site: usize) -> bool {
        self.clamped[site_index(site)]
    }

    pub fn set_clamped(&mut self, site: usize, clamped: bool) {
        self.clamped[site_index(site)] = clamped;
    }

    pub fn clamped(&self) -> [bool; 4] {
        self.clamped
    }

    /// Writes `target` into x4 and clamps it.
    pub fn clamp_target(&mut self, target: Tensor) -> Result<()> {
        self.set_site(4, target)?;
        self.clamped[3] = true;
        Ok(())
    }

    pub fn norm(&self) -> &[BnStats; 2] {
        &self.norm
    }

    pub(crate) fn input_prediction(&self) -> &Tensor {
        &self.input_prediction
    }

    pub(crate) fn site_mut(&mut self, site: usize) -> &mut Tensor {
        &mut self.sites[site_index(site)]
    }

    /// Per-example `‖x − x_init‖₂ / (‖x_init‖₂ + ε)` at `site`.
    pub fn relative_displacement(&self, site: usize) -> Vec<f64> {
        let (cur, init) = (self.site(site), self.initial(site));
        (0..self.batch())
            .map(|b| {
                let (c, i) = (cur.row(b), init.row(b));
                let diff: f64 = c.iter().zip(i).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let base: f64 = i.iter().map(|v| v * v).sum::<f64>().sqrt();
                diff / (base + DISPLACEMENT_EPS)
            })
            .collect()
    }
}

pub(crate) fn block1<'a>(p: &'a ModelParams, stats: &'a BnStats) -> ConvBlock<'a> {
    ConvBlock {
        weight: p.get(ParamId::EncConv1W),
        bias: p.get(ParamId::EncConv1B),
        gamma: p.get(ParamId::EncBn1Gamma),
        beta: p.get(ParamId::EncBn1Beta),
        stats,
    }
}

pub(crate) fn block2<'a>(p: &'a ModelParams, stats: &'a BnStats) -> ConvBlock<'a> {
    ConvBlock {
        weight: p.get(ParamId::EncConv2W),
        bias: p.get(ParamId::EncConv2B),
        gamma: p.get(ParamId::EncBn2Gamma),
        beta: p.get(ParamId::EncBn2Beta),
        stats,
    }
}

/// Batch-norm statistics for one conv output under `mode`.
fn stats_for(mode: Mode, pre_norm: &Tensor, running: &BnStats) -> Result<BnStats> {
    match mode {
        Mode::Train => batchnorm::batch_stats(pre_norm, running.mean.len()),
        Mode::Eval => Ok(running.clone()),
    }
}

/// Sets every latent site to the encoder's feedforward activation.
///
/// In train mode batch-norm uses (and freezes) the batch's own statistics, in
/// eval mode the running averages. x4 holds the raw logits; nothing is clamped.
pub fn feedforward_init(params: &ModelParams, input: &Tensor, mode: Mode) -> Result<LatentState> {
    let spec = params.spec();
    let n = input.dim(0);
    input.expect_shape("feedforward_init", &spec.input_shape(n))?;

    let a1 = crate::ops::conv::forward(input, params.get(ParamId::EncConv1W), params.get(ParamId::EncConv1B))?;
    let s1 = stats_for(mode, &a1, &params.running[0])?;
    let (x1, _) = block1(params, &s1).forward(input)?;

    let a2 = crate::ops::conv::forward(&x1, params.get(ParamId::EncConv2W), params.get(ParamId::EncConv2B))?;
    let s2 = stats_for(mode, &a2, &params.running[1])?;
    let (x2, _) = block2(params, &s2).forward(&x1)?;

    let x3 = gelu::forward(&linear::forward(&x2, params.get(ParamId::EncFc1W), params.get(ParamId::EncFc1B))?);
    let x4 = linear::forward(&x3, params.get(ParamId::EncFc2W), params.get(ParamId::EncFc2B))?;

    if !x4.is_finite() {
        return Err(Error::NonFinite { what: "feedforward logits".into(), step: 0 });
    }
    let sites = [x1.clone(), x2, x3, x4];
    Ok(LatentState {
        input: input.clone(),
        initial: sites.clone(),
        sites,
        clamped: [false; 4],
        norm: [s1, s2],
        input_prediction: x1,
    })
}

/// Number of elements each batch-norm layer averaged over for `batch` inputs.
pub fn norm_counts(params: &ModelParams, batch: usize) -> [usize; 2] {
    let s = params.spec().image_side;
    [batch * s * s, batch * (s / 2) * (s / 2)]
}

/// Eval-mode feedforward logits, computed in chunks of `chunk` inputs.
pub fn feedforward_logits(params: &ModelParams, input: &Tensor, chunk: usize) -> Result<Tensor> {
    let n = input.dim(0);
    let k = params.spec().classes;
    let mut out = Vec::with_capacity(n * k);
    for start in (0..n).step_by(chunk.max(1)) {
        let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let st = feedforward_init(params, &input.gather_rows(&idx), Mode::Eval)?;
        out.extend_from_slice(st.site(4).data());
    }
    Tensor::new(vec![n, k], out)
}
