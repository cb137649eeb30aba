use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::energy::{evaluate, with_target, EnergyBreakdown, EnergyConfig, Need};
use super::latent::LatentState;
use super::params::ModelParams;

/// Result of a settling run.
#[derive(Debug, Clone)]
pub struct Settled {
    /// Batch-mean energy before the first update and after each of the `steps` updates.
    pub trace: Vec<f64>,
    /// Per-example breakdowns at the final state.
    pub final_energy: Vec<EnergyBreakdown>,
}

/// Runs `steps` of `x_l ← x_l − η ∂E/∂x_l` on every unclamped site.
///
/// Each example descends its own energy, so the update does not depend on
/// batch size. `target`, when given, is written into x4 and clamped first.
pub fn settle(
    params: &ModelParams,
    latents: &mut LatentState,
    target: Option<&Tensor>,
    cfg: &EnergyConfig,
    steps: usize,
) -> Result<Settled> {
    if let Some(s) = with_target(latents, target, cfg)? {
        *latents = s;
    }
    let eta = cfg.eta_latent;
    let mut trace = Vec::with_capacity(steps + 1);
    let all_clamped = latents.clamped().iter().all(|&c| c);
    for step in 0..=steps {
        let last = step == steps;
        let need = Need { latents: !last && !all_clamped, params: false };
        let ev = evaluate(params, latents, cfg, need, true)?;
        let energy = EnergyBreakdown::mean(&ev.per_example).total;
        if !energy.is_finite() {
            return Err(Error::NonFinite { what: "energy during settling".into(), step });
        }
        trace.push(energy);
        if last {
            return Ok(Settled { trace, final_energy: ev.per_example });
        }
        if let Some(grads) = ev.latent_grads {
            for (site, g) in (1..=4).zip(grads) {
                if !latents.is_clamped(site) {
                    latents.site_mut(site).add_scaled(&g, -eta)?;
                }
            }
        }
    }
    unreachable!("loop returns on the last step")
}
