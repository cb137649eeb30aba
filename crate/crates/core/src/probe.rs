//! Confidence readouts: the K-way energy probe and the softmax baseline, plus
//! the residual between probe margins and log-softmax margins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::train::argmax;
use crate::model::{feedforward_init, settle, Condition, EnergyBreakdown, EnergyConfig, LatentState, ModelParams};
use crate::model::latent::feedforward_logits;
use crate::ops::{softmax, Mode};
use crate::par::{map_indexed, Exec};
use crate::tensor::Tensor;

/// Inputs settled together in one work item.
pub const PROBE_CHUNK: usize = 16;

/// Settled energies of every candidate class for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub energies: Vec<f64>,
    /// argmin of `energies`, ties to the lowest index.
    pub prediction: usize,
    /// Second-lowest minus lowest energy.
    pub margin: f64,
    pub breakdowns: Vec<EnergyBreakdown>,
    /// Relative displacement of x1..x3 averaged over the K settles.
    pub displacement: [f64; 3],
}

impl ProbeResult {
    pub fn from_breakdowns(breakdowns: Vec<EnergyBreakdown>, displacement: [f64; 3]) -> Result<Self> {
        if breakdowns.len() < 2 {
            return Err(Error::Invalid("a probe needs at least two candidates".into()));
        }
        let energies: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
        let (prediction, margin) = energy_argmin_margin(&energies);
        Ok(Self { energies, prediction, margin, breakdowns, displacement })
    }
}

/// Lowest-energy index (ties to the lowest index) and `E_(2) − E_(1)`.
pub fn energy_argmin_margin(energies: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (k, &e) in energies.iter().enumerate() {
        if e < energies[best] {
            best = k;
        }
    }
    let second = energies
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != best)
        .map(|(_, &e)| e)
        .fold(f64::INFINITY, f64::min);
    (best, second - energies[best])
}

/// Runs the K-way probe on every row of `input` with `cfg.t_eval` settling steps.
///
/// Latents start from one eval-mode feedforward pass per input; each candidate
/// k clamps the one-hot e_k at x4 and settles from that shared start. Work is
/// split into fixed chunks of inputs times candidates, so results do not depend
/// on thread count.
pub fn kway_probe(params: &ModelParams, input: &Tensor, cfg: &EnergyConfig) -> Result<Vec<ProbeResult>> {
    kway_probe_with(Exec::default(), params, input, cfg)
}

/// [`kway_probe`] with an explicit schedule.
pub fn kway_probe_with(exec: Exec, params: &ModelParams, input: &Tensor, cfg: &EnergyConfig) -> Result<Vec<ProbeResult>> {
    cfg.validate()?;
    let n = input.dim(0);
    let k = params.spec().classes;
    let chunks: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(PROBE_CHUNK).map(<[usize]>::to_vec).collect();
    let inits = map_indexed(exec, chunks.len(), |c| feedforward_init(params, &input.gather_rows(&chunks[c]), Mode::Eval))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let settled = map_indexed(exec, chunks.len() * k, |item| {
        let (c, class) = (item / k, item % k);
        settle_candidate(params, &inits[c], class, cfg)
    });

    let mut out = Vec::with_capacity(n);
    let mut settled = settled.into_iter();
    for chunk in &chunks {
        let per_class = (0..k).map(|_| settled.next().expect("one item per chunk and class")).collect::<Result<Vec<_>>>()?;
        for row in 0..chunk.len() {
            let breakdowns = per_class.iter().map(|(b, _)| b[row]).collect();
            let mut disp = [0.0; 3];
            for (_, d) in &per_class {
                (0..3).for_each(|l| disp[l] += d[l][row] / k as f64);
            }
            out.push(ProbeResult::from_breakdowns(breakdowns, disp)?);
        }
    }
    Ok(out)
}

type CandidateRun = (Vec<EnergyBreakdown>, [Vec<f64>; 3]);

fn settle_candidate(params: &ModelParams, init: &LatentState, class: usize, cfg: &EnergyConfig) -> Result<CandidateRun> {
    let mut state = init.clone();
    let n = state.batch();
    let mut target = Tensor::zeros(&[n, params.spec().classes]);
    (0..n).for_each(|i| target.row_mut(i)[class] = 1.0);
    let run = settle(params, &mut state, Some(&target), cfg, cfg.t_eval)?;
    let disp = [1, 2, 3].map(|s| state.relative_displacement(s));
    Ok((run.final_energy, disp))
}

/// Feedforward softmax readout for one logit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxResult {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub prediction: usize,
    /// Top-1 minus top-2 probability.
    pub margin: f64,
    pub logit_norm: f64,
    /// Top-1 minus top-2 logit.
    pub logit_margin: f64,
}

fn top_two(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
        if x > a {
            (x, a)
        } else {
            (a, b.max(x))
        }
    })
}

impl SoftmaxResult {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut probabilities = vec![0.0; logits.len()];
        softmax::softmax_row(logits, &mut probabilities);
        let (p1, p2) = top_two(&probabilities);
        let (l1, l2) = top_two(logits);
        Self {
            logits: logits.to_vec(),
            prediction: argmax(logits),
            margin: p1 - p2,
            logit_norm: logits.iter().map(|v| v * v).sum::<f64>().sqrt(),
            logit_margin: l1 - l2,
            probabilities,
        }
    }
}

/// One eval-mode forward pass per row of `input`; no settling.
pub fn softmax_readout(params: &ModelParams, input: &Tensor) -> Result<Vec<SoftmaxResult>> {
    let logits = feedforward_logits(params, input, 256)?;
    Ok(softmax_results(&logits))
}

pub fn softmax_results(logits: &Tensor) -> Vec<SoftmaxResult> {
    (0..logits.dim(0)).map(|i| SoftmaxResult::from_logits(logits.row(i))).collect()
}

/// Probe margins against log-softmax margins, per class, under two orderings:
/// relative to the best candidate (`E_k − E_(1)` against `log p_(1) − log p_k`)
/// and relative to the runner-up (`E_k − E_(2)` against `log p_(2) − log p_k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub energy_margin: Vec<f64>,
    pub log_softmax_margin: Vec<f64>,
    pub residual: Vec<f64>,
    pub energy_margin_second: Vec<f64>,
    pub log_softmax_margin_second: Vec<f64>,
    pub residual_second: Vec<f64>,
}

impl DecompositionRecord {
    pub fn new(probe: &ProbeResult, soft: &SoftmaxResult) -> Result<Self> {
        let e = &probe.energies;
        let logp = softmax::log_softmax_row(&soft.logits);
        if e.len() != logp.len() {
            return Err(Error::Shape { op: "decomposition", detail: format!("{} energies vs {} classes", e.len(), logp.len()) });
        }
        let sorted_e = sorted(e);
        let sorted_l = sorted(&logp.iter().map(|v| -v).collect::<Vec<_>>());
        let energy_margin: Vec<f64> = e.iter().map(|v| v - sorted_e[0]).collect();
        let log_softmax_margin: Vec<f64> = logp.iter().map(|v| -sorted_l[0] - v).collect();
        let energy_margin_second: Vec<f64> = e.iter().map(|v| v - sorted_e[1]).collect();
        let log_softmax_margin_second: Vec<f64> = logp.iter().map(|v| -sorted_l[1] - v).collect();
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let rec = Self {
            residual: diff(&energy_margin, &log_softmax_margin),
            residual_second: diff(&energy_margin_second, &log_softmax_margin_second),
            energy_margin,
            log_softmax_margin,
            energy_margin_second,
            log_softmax_margin_second,
        };
        if rec.residual.iter().chain(&rec.residual_second).all(|v| v.is_finite()) {
            Ok(rec)
        } else {
            Err(Error::NonFinite { what: "decomposition residual".into(), step: 0 })
        }
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Decomposition records for every row of `input`; stdPC-CE only.
pub fn decomposition_residuals(params: &ModelParams, input: &Tensor, cfg: &EnergyConfig) -> Result<Vec<DecompositionRecord>> {
    if cfg.condition != Condition::StdPcCe {
        return Err(Error::Invalid(format!("the decomposition applies to stdpc-ce, not {}", cfg.condition)));
    }
    let probes = kway_probe(params, input, cfg)?;
    let soft = softmax_readout(params, input)?;
    decomposition_from(&probes, &soft)
}

/// Decomposition records from already computed readouts.
pub fn decomposition_from(probes: &[ProbeResult], soft: &[SoftmaxResult]) -> Result<Vec<DecompositionRecord>> {
    probes.iter().zip(soft).map(|(p, s)| DecompositionRecord::new(p, s)).collect()
}
