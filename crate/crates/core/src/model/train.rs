use serde::{Deserialize, Serialize};

use crate::adamw::{AdamWConfig, AdamWState};
use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::rng::{Rng, Stream};
use crate::tensor::Tensor;

use super::energy::{evaluate, EnergyBreakdown, EnergyConfig, Need};
use super::latent::{feedforward_init, feedforward_logits, norm_counts};
use super::params::ModelParams;
use super::settle::settle;
use super::spec::ParamId;

/// Images `N x C x S x S` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rank() != 4 || images.dim(0) != labels.len() {
            return Err(Error::Shape {
                op: "dataset",
                detail: format!("images {:?} vs {} labels", images.shape(), labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Invalid(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// The first `n` examples in storage order.
    pub fn head(&self, n: usize) -> Self {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub energy: EnergyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean settled energy over training batches.
    pub train_energy: f64,
    /// Feedforward accuracy on training batches, measured before each update.
    pub train_accuracy: f64,
    /// Eval-mode softmax accuracy on the held-out set, when one is given.
    pub test_accuracy: Option<f64>,
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let hits = labels.iter().enumerate().filter(|&(i, &l)| argmax(logits.row(i)) == l).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Trains `params` in place.
///
/// Per batch: feedforward initialisation (batch statistics), clamp the one-hot
/// label at x4, settle for `t_train` steps, then one AdamW step on ∂E/∂θ at the
/// settled state. Batch order is shuffled each epoch from the seed's data-order stream.
pub fn train(
    params: &mut ModelParams,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.energy.validate()?;
    if cfg.batch_size == 0 || data.is_empty() {
        return Err(Error::Invalid("training needs a positive batch size and a non-empty dataset".into()));
    }
    let spec = *params.spec();
    data.images.expect_shape("train", &spec.input_shape(data.len()))?;
    if data.classes != spec.classes {
        return Err(Error::Invalid(format!("dataset has {} classes, model {}", data.classes, spec.classes)));
    }
    let mut order_rng = Rng::new(seed).stream(Stream::DataOrder);
    let mut opt = AdamWState::new(cfg.optimizer, &params.tensors());
    let names: Vec<&str> = ParamId::ALL.iter().map(|p| p.name()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let (mut energy_sum, mut hits, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let images = data.images.gather_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let mut state = feedforward_init(params, &images, Mode::Train)?;
            hits += labels.iter().enumerate().filter(|&(i, &l)| argmax(state.site(4).row(i)) == l).count();
            params.update_running(state.norm(), norm_counts(params, batch.len()));

            let target = one_hot(&labels, spec.classes);
            settle(params, &mut state, Some(&target), &cfg.energy, cfg.energy.t_train)?;
            let ev = evaluate(params, &state, &cfg.energy, Need { latents: false, params: true }, false)?;
            let energy = EnergyBreakdown::mean(&ev.per_example).total;
            if !energy.is_finite() {
                return Err(Error::NonFinite { what: "training energy".into(), step: opt.step_count() as usize });
            }
            let grads = ev.param_grads.expect("requested");
            let grad_refs: Vec<&Tensor> = grads.iter().map(|(_, t)| t).collect();
            opt.step(&mut params.tensors_mut(), &grad_refs, &names)?;
            energy_sum += energy * batch.len() as f64;
            seen += batch.len();
        }
        let test_accuracy = match eval {
            Some(ev) => Some(accuracy(&feedforward_logits(params, &ev.images, 256)?, &ev.labels)),
            None => None,
        };
        let log = EpochLog {
            epoch: epoch + 1,
            train_energy: energy_sum / seen as f64,
            train_accuracy: hits as f64 / seen as f64,
            test_accuracy,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}
