//! Energy formulations and their gradients.
//!
//! Every squared-error term is `α/2 · mean_units(x_l − prediction)²` per example;
//! batch energies average the per-example values. Discriminative predictions
//! come from the encoder blocks (μ_l = block_l(x_{l−1}), x0 the clamped image),
//! generative ones from the W-pathway applied to `f(x_{l+1})`.
//!
//! - stdPC-CE: disc terms at x1..x3, plus `CE(x4, softmax(μ4))` with x4 the
//!   clamped target or candidate, plus α_gen-weighted generative terms.
//! - stdPC-MSE: as above with `α_disc/2 · mean(x4 − μ4)²` as the output term.
//! - bPC: disc terms at x1..x4 and generative terms at x1..x3, no output loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{gelu, interp, linear, softmax};
use crate::tensor::Tensor;

use super::blocks::upconv_forward;
use super::latent::{block1, block2, LatentState};
use super::params::{ModelParams, ParamGrads};
use super::spec::ParamId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "stdpc-ce")]
    StdPcCe,
    #[serde(rename = "stdpc-mse")]
    StdPcMse,
    #[serde(rename = "bpc")]
    Bpc,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::StdPcCe, Condition::StdPcMse, Condition::Bpc];

    pub fn label(self) -> &'static str {
        match self {
            Condition::StdPcCe => "stdpc-ce",
            Condition::StdPcMse => "stdpc-mse",
            Condition::Bpc => "bpc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown condition {s:?}")))
    }

    /// Conditions A and B require a clamped x4 to define their output term.
    pub fn needs_target(self) -> bool {
        !matches!(self, Condition::Bpc)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub condition: Condition,
    pub alpha_gen: f64,
    pub alpha_disc: f64,
    pub t_train: usize,
    pub t_eval: usize,
    pub eta_latent: f64,
}

impl EnergyConfig {
    /// Per-condition defaults: T=13 for standard PC, 32/100 for bPC; α_gen 1e-5, α_disc 1.
    pub fn for_condition(condition: Condition) -> Self {
        let (t_train, t_eval) = match condition {
            Condition::StdPcCe | Condition::StdPcMse => (13, 13),
            Condition::Bpc => (32, 100),
        };
        Self { condition, alpha_gen: 1e-5, alpha_disc: 1.0, t_train, t_eval, eta_latent: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_gen >= 0.0
            && self.alpha_gen.is_finite()
            && self.alpha_disc > 0.0
            && self.alpha_disc.is_finite()
            && self.t_train >= 1
            && self.eta_latent > 0.0
            && self.eta_latent.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("energy config {self:?}")))
        }
    }
}

/// Weighted energy terms. Layer arrays are indexed by site (x1 at 0);
/// `disc[3]` is only used by bPC.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub disc: [f64; 4],
    pub gen: [f64; 3],
    /// CE (stdPC-CE) or squared error (stdPC-MSE) at the output; zero for bPC.
    pub output: f64,
    pub gen_sum: f64,
    pub disc_sum: f64,
}

impl EnergyBreakdown {
    pub fn from_terms(disc: [f64; 4], gen: [f64; 3], output: f64) -> Self {
        let disc_sum = disc.iter().sum::<f64>();
        let gen_sum = gen.iter().sum::<f64>();
        Self { total: disc_sum + gen_sum + output, disc, gen, output, gen_sum, disc_sum }
    }

    /// Sum of parts minus `total`.
    pub fn residual(&self) -> f64 {
        self.disc.iter().sum::<f64>() + self.gen.iter().sum::<f64>() + self.output - self.total
    }

    /// Term-wise mean.
    pub fn mean(items: &[EnergyBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let mut disc = [0.0; 4];
        let mut gen = [0.0; 3];
        let mut output = 0.0;
        for e in items {
            disc.iter_mut().zip(e.disc).for_each(|(a, b)| *a += b / n);
            gen.iter_mut().zip(e.gen).for_each(|(a, b)| *a += b / n);
            output += e.output / n;
        }
        Self::from_terms(disc, gen, output)
    }
}

/// Which gradients an evaluation should produce.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Need {
    pub latents: bool,
    pub params: bool,
}

pub(crate) struct Evaluation {
    pub per_example: Vec<EnergyBreakdown>,
    /// ∂(Σ_b E_b)/∂x_l for unclamped sites (zero tensors for clamped ones).
    pub latent_grads: Option<[Tensor; 4]>,
    /// ∂(mean_b E_b)/∂θ.
    pub param_grads: Option<ParamGrads>,
}

/// Squared-error term per example: `scale/2 · mean_units(a − b)²`, with residual `a − b`.
fn sq_term(a: &Tensor, b: &Tensor, scale: f64) -> Result<(Vec<f64>, Tensor)> {
    let r = a.sub(b)?;
    let units = r.row_len() as f64;
    let per = (0..r.dim(0)).map(|i| 0.5 * scale * r.row(i).iter().map(|v| v * v).sum::<f64>() / units).collect();
    Ok((per, r))
}

/// `residual * (-scale / units)`: gradient of the term w.r.t. the prediction.
fn pred_grad(residual: &Tensor, scale: f64) -> Tensor {
    let k = -scale / residual.row_len() as f64;
    residual.map(|v| v * k)
}

fn act_forward(params: &ModelParams, x: &Tensor) -> Tensor {
    let f = params.spec().activation;
    x.map(|v| f.apply(v))
}

fn act_backward(params: &ModelParams, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    let f = params.spec().activation;
    x.zip_map(dy, |v, d| f.grad(v) * d)
}

/// Evaluates the energy of `state` (x4 taken from the state) and requested gradients.
///
/// With `reuse_input_prediction`, μ1 is read from the state's cache instead of
/// recomputed; valid only while parameters are unchanged since the state was built.
pub(crate) fn evaluate(
    params: &ModelParams,
    state: &LatentState,
    cfg: &EnergyConfig,
    need: Need,
    reuse_input_prediction: bool,
) -> Result<Evaluation> {
    let n = state.batch();
    let (ad, ag) = (cfg.alpha_disc, cfg.alpha_gen);
    let use_gen = ag != 0.0;
    let [x1, x2, x3, x4] = state.sites();
    let clamped = state.clamped();
    let pscale = 1.0 / n as f64;
    let want_param = need.params.then_some(pscale);

    // Discriminative predictions.
    let b1 = block1(params, &state.norm()[0]);
    let (mu1, cache1) = if reuse_input_prediction && !need.params {
        (state.input_prediction().clone(), None)
    } else {
        let (m, c) = b1.forward(state.input())?;
        (m, Some(c))
    };
    let b2 = block2(params, &state.norm()[1]);
    let (mu2, cache2) = b2.forward(x1)?;
    let a3 = linear::forward(x2, params.get(ParamId::EncFc1W), params.get(ParamId::EncFc1B))?;
    let mu3 = gelu::forward(&a3);
    let mu4 = linear::forward(x3, params.get(ParamId::EncFc2W), params.get(ParamId::EncFc2B))?;

    let (d1, e1) = sq_term(x1, &mu1, ad)?;
    let (d2, e2) = sq_term(x2, &mu2, ad)?;
    let (d3, e3) = sq_term(x3, &mu3, ad)?;

    // Output term and its gradient w.r.t. μ4 (per example) and x4.
    let k = params.spec().classes;
    let mut output = vec![0.0; n];
    let mut disc4 = vec![0.0; n];
    let mut g_mu4 = Tensor::zeros(mu4.shape());
    let mut g_x4 = Tensor::zeros(x4.shape());
    match cfg.condition {
        Condition::StdPcCe => {
            let mut p = vec![0.0; k];
            for b in 0..n {
                let (z, y) = (mu4.row(b), x4.row(b));
                let logp = softmax::log_softmax_row(z);
                softmax::softmax_row(z, &mut p);
                output[b] = -y.iter().zip(&logp).map(|(a, l)| a * l).sum::<f64>();
                let ysum: f64 = y.iter().sum();
                for j in 0..k {
                    g_mu4.row_mut(b)[j] = p[j] * ysum - y[j];
                    g_x4.row_mut(b)[j] = -logp[j];
                }
            }
        }
        Condition::StdPcMse | Condition::Bpc => {
            let (per, r) = sq_term(x4, &mu4, ad)?;
            g_mu4 = pred_grad(&r, ad);
            g_x4 = g_mu4.map(|v| -v);
            if cfg.condition == Condition::Bpc {
                disc4 = per;
            } else {
                output = per;
            }
        }
    }

    // Generative predictions.
    struct Gen {
        f4: Tensor,
        f3: Tensor,
        up2: Tensor,
        r1: Tensor,
        r2: Tensor,
        r3: Tensor,
        g: [Vec<f64>; 3],
    }
    let gen = if use_gen {
        let f4 = act_forward(params, x4);
        let nu3 = linear::forward(&f4, params.get(ParamId::GenFc1W), params.get(ParamId::GenFc1B))?;
        let f3 = act_forward(params, x3);
        let nu2 = linear::forward(&f3, params.get(ParamId::GenFc2W), params.get(ParamId::GenFc2B))?
            .reshape(x2.shape())?;
        let f2 = act_forward(params, x2);
        let (nu1, up2) = upconv_forward(&f2, params.get(ParamId::GenConvW), params.get(ParamId::GenConvB))?;
        let (g1, r1) = sq_term(x1, &nu1, ag)?;
        let (g2, r2) = sq_term(x2, &nu2, ag)?;
        let (g3, r3) = sq_term(x3, &nu3, ag)?;
        Some(Gen { f4, f3, up2, r1, r2, r3, g: [g1, g2, g3] })
    } else {
        None
    };

    let per_example: Vec<EnergyBreakdown> = (0..n)
        .map(|b| {
            let g = gen.as_ref().map_or([0.0; 3], |g| [g.g[0][b], g.g[1][b], g.g[2][b]]);
            EnergyBreakdown::from_terms([d1[b], d2[b], d3[b], disc4[b]], g, output[b])
        })
        .collect();

    if !need.latents && !need.params {
        return Ok(Evaluation { per_example, latent_grads: None, param_grads: None });
    }

    let g_mu1 = pred_grad(&e1, ad);
    let g_mu2 = pred_grad(&e2, ad);
    let g_mu3 = pred_grad(&e3, ad);
    let g_a3 = gelu::backward(&a3, &g_mu3)?;
    let mut grads = need.params.then(|| ParamGrads::zeros(params.spec()));

    // Encoder blocks.
    if let (Some(pg), Some(c1)) = (grads.as_mut(), cache1.as_ref()) {
        let (_, g) = b1.backward(state.input(), c1, &g_mu1, false, want_param)?;
        let g = g.expect("requested");
        *pg.get_mut(ParamId::EncConv1W) = g.weight;
        *pg.get_mut(ParamId::EncConv1B) = g.bias;
        *pg.get_mut(ParamId::EncBn1Gamma) = g.gamma;
        *pg.get_mut(ParamId::EncBn1Beta) = g.beta;
    }
    let want_dx1 = need.latents && !clamped[0];
    let (dx1_from_2, g2) = b2.backward(x1, &cache2, &g_mu2, want_dx1, want_param)?;
    if let (Some(pg), Some(g)) = (grads.as_mut(), g2) {
        *pg.get_mut(ParamId::EncConv2W) = g.weight;
        *pg.get_mut(ParamId::EncConv2B) = g.bias;
        *pg.get_mut(ParamId::EncBn2Gamma) = g.gamma;
        *pg.get_mut(ParamId::EncBn2Beta) = g.beta;
    }
    if let Some(pg) = grads.as_mut() {
        let (w, b) = pg.pair_mut(ParamId::EncFc1W, ParamId::EncFc1B);
        linear::backward_params(x2, &g_a3, w, b, pscale)?;
        let (w, b) = pg.pair_mut(ParamId::EncFc2W, ParamId::EncFc2B);
        linear::backward_params(x3, &g_mu4, w, b, pscale)?;
    }

    // Generator.
    let mut gen_dx: [Option<Tensor>; 3] = [None, None, None];
    if let Some(g) = gen.as_ref() {
        let g_nu1 = pred_grad(&g.r1, ag);
        let g_nu2 = pred_grad(&g.r2, ag).reshape(&[n, params.spec().flat_dim()])?;
        let g_nu3 = pred_grad(&g.r3, ag);
        if let Some(pg) = grads.as_mut() {
            let (w, b) = pg.pair_mut(ParamId::GenFc1W, ParamId::GenFc1B);
            linear::backward_params(&g.f4, &g_nu3, w, b, pscale)?;
            let (w, b) = pg.pair_mut(ParamId::GenFc2W, ParamId::GenFc2B);
            linear::backward_params(&g.f3, &g_nu2, w, b, pscale)?;
            let (w, b) = pg.pair_mut(ParamId::GenConvW, ParamId::GenConvB);
            crate::ops::conv::backward_params(&g.up2, &g_nu1, w, b, pscale)?;
        }
        if need.latents {
            if !clamped[1] {
                let d_up = crate::ops::conv::backward_input(&g_nu1, params.get(ParamId::GenConvW), g.up2.shape())?;
                let d_f2 = interp::backward(&d_up, x2.shape())?;
                gen_dx[0] = Some(act_backward(params, x2, &d_f2)?);
            }
            if !clamped[2] {
                let d_f3 = linear::backward_input(&g_nu2, params.get(ParamId::GenFc2W), g.f3.shape())?;
                gen_dx[1] = Some(act_backward(params, x3, &d_f3)?);
            }
            if !clamped[3] {
                let d_f4 = linear::backward_input(&g_nu3, params.get(ParamId::GenFc1W), g.f4.shape())?;
                gen_dx[2] = Some(act_backward(params, x4, &d_f4)?);
            }
        }
    }

    let latent_grads = if need.latents {
        let mut gx1 = e1.map(|v| v * ad / e1.row_len() as f64);
        let mut gx2 = e2.map(|v| v * ad / e2.row_len() as f64);
        let mut gx3 = e3.map(|v| v * ad / e3.row_len() as f64);
        let mut gx4 = g_x4;
        if let Some(g) = gen.as_ref() {
            gx1.add_scaled(&g.r1, ag / g.r1.row_len() as f64)?;
            gx2.add_scaled(&g.r2, ag / g.r2.row_len() as f64)?;
            gx3.add_scaled(&g.r3, ag / g.r3.row_len() as f64)?;
        }
        if let Some(d) = dx1_from_2 {
            gx1.add_scaled(&d, 1.0)?;
        }
        if !clamped[1] {
            gx2.add_scaled(&linear::backward_input(&g_a3, params.get(ParamId::EncFc1W), x2.shape())?, 1.0)?;
        }
        if !clamped[2] {
            gx3.add_scaled(&linear::backward_input(&g_mu4, params.get(ParamId::EncFc2W), x3.shape())?, 1.0)?;
        }
        for (dst, extra) in [&mut gx2, &mut gx3, &mut gx4].into_iter().zip(gen_dx) {
            if let Some(e) = extra {
                dst.add_scaled(&e, 1.0)?;
            }
        }
        let mut out = [gx1, gx2, gx3, gx4];
        for (g, &c) in out.iter_mut().zip(&clamped) {
            if c {
                g.scale(0.0);
            }
        }
        Some(out)
    } else {
        None
    };

    Ok(Evaluation { per_example, latent_grads, param_grads: grads })
}

/// Energy of `latents` under `cfg`, averaged over the batch.
///
/// `target` (one-hot rows) overrides and clamps x4; conditions with an output
/// loss reject a missing target unless x4 is already clamped.
pub fn compute_energy(
    params: &ModelParams,
    latents: &LatentState,
    target: Option<&Tensor>,
    cfg: &EnergyConfig,
) -> Result<EnergyBreakdown> {
    Ok(EnergyBreakdown::mean(&compute_energy_per_example(params, latents, target, cfg)?))
}

/// Per-example energy breakdowns.
pub fn compute_energy_per_example(
    params: &ModelParams,
    latents: &LatentState,
    target: Option<&Tensor>,
    cfg: &EnergyConfig,
) -> Result<Vec<EnergyBreakdown>> {
    let state = with_target(latents, target, cfg)?;
    let state = state.as_ref().unwrap_or(latents);
    Ok(evaluate(params, state, cfg, Need::default(), false)?.per_example)
}

/// Applies `target` to a copy of `latents` when given, validating target requirements.
pub(crate) fn with_target(
    latents: &LatentState,
    target: Option<&Tensor>,
    cfg: &EnergyConfig,
) -> Result<Option<LatentState>> {
    match target {
        Some(t) => {
            let mut s = latents.clone();
            s.clamp_target(t.clone())?;
            Ok(Some(s))
        }
        None if cfg.condition.needs_target() && !latents.is_clamped(4) => {
            Err(Error::MissingTarget("stdPC conditions need a clamped output target"))
        }
        None => Ok(None),
    }
}

/// Latent and parameter gradients of the energy at `latents` (for checks and training).
pub fn energy_gradients(
    params: &ModelParams,
    latents: &LatentState,
    cfg: &EnergyConfig,
) -> Result<(EnergyBreakdown, [Tensor; 4], ParamGrads)> {
    if cfg.condition.needs_target() && !latents.is_clamped(4) {
        return Err(Error::MissingTarget("stdPC conditions need a clamped output target"));
    }
    let ev = evaluate(params, latents, cfg, Need { latents: true, params: true }, false)?;
    Ok((
        EnergyBreakdown::mean(&ev.per_example),
        ev.latent_grads.expect("requested"),
        ev.param_grads.expect("requested"),
    ))
}
