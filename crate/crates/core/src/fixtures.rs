//! Small random model instances for gradient checks, property tests and benches.

use crate::error::Result;
use crate::model::latent::{block1, block2};
use crate::model::train::one_hot;
use crate::model::{feedforward_init, Activation, LatentState, ModelParams, ModelSpec};
use crate::ops::batchnorm::BnStats;
use crate::gradcheck::{central_difference, rel_error};
use crate::model::{Condition, EnergyConfig};
use crate::ops::{conv, gelu, primitive_forward, primitive_vjp, Mode, PrimitiveKind};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// TinyConv layer kinds on 8x8 inputs with narrow channels.
pub fn shrunken_spec() -> ModelSpec {
    ModelSpec {
        in_channels: 3,
        image_side: 8,
        conv1_channels: 4,
        conv2_channels: 6,
        hidden: 12,
        classes: 10,
        activation: Activation::Gelu,
    }
}

/// 4x4 inputs; every latent site has at most 16 units.
pub fn tiny_spec() -> ModelSpec {
    ModelSpec {
        in_channels: 3,
        image_side: 4,
        conv1_channels: 4,
        conv2_channels: 8,
        hidden: 16,
        classes: 10,
        activation: Activation::Gelu,
    }
}

pub fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-scale, scale))
}

/// Seeded parameters with batch-norm affine terms and running stats randomised.
pub fn random_params(spec: ModelSpec, rng: &mut Rng) -> Result<ModelParams> {
    let mut p = ModelParams::init(spec, &Rng::new(rng.below(1 << 30) as u64))?;
    for id in [crate::model::ParamId::EncBn1Gamma, crate::model::ParamId::EncBn2Gamma] {
        *p.get_mut(id) = Tensor::from_fn(p.get(id).shape(), |_| rng.uniform(0.5, 1.5));
    }
    for id in [crate::model::ParamId::EncBn1Beta, crate::model::ParamId::EncBn2Beta] {
        *p.get_mut(id) = random_tensor(rng, p.get(id).shape(), 0.3);
    }
    for l in 0..2 {
        let c = p.running[l].mean.len();
        p.running[l] = BnStats {
            mean: (0..c).map(|_| rng.uniform(-0.2, 0.2)).collect(),
            var: (0..c).map(|_| rng.uniform(0.3, 1.5)).collect(),
        };
    }
    Ok(p)
}

/// Random labels for `n` examples.
pub fn random_targets(rng: &mut Rng, n: usize, classes: usize) -> (Vec<usize>, Tensor) {
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
    let t = one_hot(&labels, classes);
    (labels, t)
}

/// Feedforward-initialised latents (eval statistics) with each unclamped site
/// displaced by uniform noise of relative size `jitter`.
pub fn random_state(params: &ModelParams, rng: &mut Rng, batch: usize, jitter: f64) -> Result<LatentState> {
    let spec = params.spec();
    let input = random_tensor(rng, &spec.input_shape(batch), 1.0);
    let init = feedforward_init(params, &input, Mode::Eval)?;
    let mut sites = init.sites().clone();
    for s in sites.iter_mut() {
        let scale = jitter * (s.max_abs() + 0.1);
        let noise = random_tensor(rng, s.shape(), scale);
        s.add_scaled(&noise, 1.0)?;
    }
    LatentState::from_parts(params, input, sites, init.norm().clone())
}

/// Smallest gap between the largest and second-largest entry over every 2x2
/// pooling window the energy evaluates; finite differences are unreliable
/// when this is near zero.
pub fn pool_margin(params: &ModelParams, state: &LatentState) -> Result<f64> {
    let mut margin = f64::INFINITY;
    let pre = [
        (block1(params, &state.norm()[0]), state.input()),
        (block2(params, &state.norm()[1]), state.site(1)),
    ];
    for (blk, x) in pre {
        let a = conv::forward(x, blk.weight, blk.bias)?;
        let b = crate::ops::batchnorm::forward_with_stats(&a, blk.gamma, blk.beta, blk.stats)?;
        let g = gelu::forward(&b);
        let s = g.shape().to_vec();
        let (h, w) = (s[2], s[3]);
        for p in 0..s[0] * s[1] {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let mut v = [
                        g.data()[(p * h + 2 * i) * w + 2 * j],
                        g.data()[(p * h + 2 * i) * w + 2 * j + 1],
                        g.data()[(p * h + 2 * i + 1) * w + 2 * j],
                        g.data()[(p * h + 2 * i + 1) * w + 2 * j + 1],
                    ];
                    v.sort_by(|a, b| b.total_cmp(a));
                    margin = margin.min(v[0] - v[1]);
                }
            }
        }
    }
    Ok(margin)
}

/// Distinct values spaced 0.05 apart, so pooling argmax is stable under FD steps.
fn pool_input(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
    rng.shuffle(&mut vals);
    Tensor::new(shape.to_vec(), vals).expect("shape matches length")
}

/// Random inputs for one primitive, in the order `primitive_forward` expects.
pub fn primitive_instance(kind: PrimitiveKind, mode: Mode, rng: &mut Rng) -> Vec<Tensor> {
    match kind {
        PrimitiveKind::Linear => {
            vec![random_tensor(rng, &[3, 5], 1.0), random_tensor(rng, &[4, 5], 1.0), random_tensor(rng, &[4], 1.0)]
        }
        PrimitiveKind::Conv3x3Pad1 => vec![
            random_tensor(rng, &[2, 2, 4, 5], 1.0),
            random_tensor(rng, &[3, 2, 3, 3], 1.0),
            random_tensor(rng, &[3], 1.0),
        ],
        PrimitiveKind::BatchNorm => {
            let mut v = vec![random_tensor(rng, &[3, 2, 2, 3], 2.0), random_tensor(rng, &[2], 1.5), random_tensor(rng, &[2], 1.0)];
            if mode == Mode::Eval {
                v.push(random_tensor(rng, &[2], 0.5));
                v.push(Tensor::from_fn(&[2], |_| rng.uniform(0.5, 2.0)));
            }
            v
        }
        PrimitiveKind::Gelu => vec![random_tensor(rng, &[3, 7], 3.0)],
        PrimitiveKind::Maxpool2 => vec![pool_input(rng, &[2, 2, 4, 4])],
        PrimitiveKind::Interp2Nearest => vec![random_tensor(rng, &[2, 3, 2, 3], 1.0)],
        PrimitiveKind::Softmax => vec![random_tensor(rng, &[3, 6], 3.0)],
    }
}

/// Largest relative error between a primitive's VJP and central differences
/// (step 1e-3) over its differentiable inputs, on one random instance.
pub fn primitive_fd_error(kind: PrimitiveKind, mode: Mode, rng: &mut Rng) -> Result<f64> {
    let inputs = primitive_instance(kind, mode, rng);
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let out = primitive_forward(kind, &refs, mode)?;
    let up = random_tensor(rng, out.shape(), 1.0);
    let grads = primitive_vjp(kind, &refs, &up, mode)?;
    let mut worst = 0.0f64;
    for (slot, g) in grads.iter().enumerate() {
        let fd = central_difference(&inputs[slot], 1e-3, |probe| {
            let mut trial = inputs.clone();
            trial[slot] = probe.clone();
            let r: Vec<&Tensor> = trial.iter().collect();
            let y = primitive_forward(kind, &r, mode).expect("forward succeeded on the unperturbed instance");
            y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        });
        worst = worst.max(rel_error(g, &fd));
    }
    Ok(worst)
}

/// Energy settings for gradient checks: α values away from 0 and 1 so both terms are exercised.
pub fn gradcheck_config(condition: Condition) -> EnergyConfig {
    EnergyConfig { alpha_gen: 0.3, alpha_disc: 0.7, ..EnergyConfig::for_condition(condition) }
}

/// A shrunken-model instance (batch 2) whose pooling windows are at least
/// 5e-3 from ties; x4 is clamped to a random one-hot when `clamp_output` or the
/// condition needs a target.
pub fn gradcheck_instance(condition: Condition, rng: &mut Rng, clamp_output: bool) -> Result<(ModelParams, LatentState)> {
    loop {
        let params = random_params(shrunken_spec(), rng)?;
        let mut state = random_state(&params, rng, 2, 0.5)?;
        if clamp_output || condition.needs_target() {
            let (_, t) = random_targets(rng, 2, params.spec().classes);
            state.clamp_target(t)?;
        }
        if pool_margin(&params, &state)? > 5e-3 {
            return Ok((params, state));
        }
    }
}
