use crate::checkpoint;
use crate::error::{Error, Result};
use crate::ops::batchnorm::BnStats;
use crate::rng::{Rng, Stream};
use crate::tensor::Tensor;

use super::spec::{ModelSpec, ParamId};

/// All trainable tensors (encoder V-pathway and generator W-pathway) plus
/// the batch-norm running buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    tensors: Vec<Tensor>,
    /// Running statistics for the two encoder batch-norm layers.
    pub running: [BnStats; 2],
}

/// Gradients laid out like [`ModelParams`]' trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    tensors: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self { tensors: ParamId::ALL.iter().map(|&id| Tensor::zeros(&spec.param_shape(id))).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        ParamId::ALL.iter().copied().zip(&self.tensors)
    }

    /// Mutable access to two distinct slots, `a` ordered before `b`.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Tensor, &mut Tensor) {
        assert!(a.index() < b.index(), "pair_mut expects {a:?} before {b:?}");
        let (lo, hi) = self.tensors.split_at_mut(b.index());
        (&mut lo[a.index()], &mut hi[0])
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }
}

impl ModelParams {
    /// Uniform `±sqrt(1/fan_in)` weights and biases; batch-norm scale 1, shift 0.
    pub fn init(spec: ModelSpec, rng: &Rng) -> Result<Self> {
        spec.validate()?;
        let mut draw = rng.stream(Stream::WeightInit);
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let shape = spec.param_shape(id);
                match (id, spec.fan_in(id)) {
                    (_, Some(fan)) => {
                        let bound = (1.0 / fan as f64).sqrt();
                        Tensor::from_fn(&shape, |_| draw.uniform(-bound, bound))
                    }
                    (ParamId::EncBn1Gamma | ParamId::EncBn2Gamma, None) => Tensor::full(&shape, 1.0),
                    _ => Tensor::zeros(&shape),
                }
            })
            .collect();
        Ok(Self {
            spec,
            tensors,
            running: [BnStats::identity(spec.conv1_channels), BnStats::identity(spec.conv2_channels)],
        })
    }

    /// All-zero weights and biases, batch-norm scale 1.
    pub fn zeros(spec: ModelSpec) -> Self {
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| match id {
                ParamId::EncBn1Gamma | ParamId::EncBn2Gamma => Tensor::full(&spec.param_shape(id), 1.0),
                _ => Tensor::zeros(&spec.param_shape(id)),
            })
            .collect();
        Self {
            spec,
            tensors,
            running: [BnStats::identity(spec.conv1_channels), BnStats::identity(spec.conv2_channels)],
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        ParamId::ALL.iter().copied().zip(&self.tensors)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Folds a batch's statistics into the running buffers.
    pub fn update_running(&mut self, batch: &[BnStats; 2], count: [usize; 2]) {
        for l in 0..2 {
            crate::ops::batchnorm::update_running(&mut self.running[l], &batch[l], count[l]);
        }
    }

    fn buffer_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, stats) in self.running.iter().enumerate() {
            let n = stats.mean.len();
            out.push((format!("enc.bn{}.running_mean", l + 1), Tensor::new(vec![n], stats.mean.clone()).unwrap()));
            out.push((format!("enc.bn{}.running_var", l + 1), Tensor::new(vec![n], stats.var.clone()).unwrap()));
        }
        out
    }

    pub fn write_checkpoint(&self, w: &mut impl std::io::Write) -> Result<()> {
        let buffers = self.buffer_tensors();
        let named = self
            .iter()
            .map(|(id, t)| (id.name(), t))
            .chain(buffers.iter().map(|(n, t)| (n.as_str(), t)));
        checkpoint::write_tensors(w, named)
    }

    pub fn read_checkpoint(spec: ModelSpec, r: &mut impl std::io::Read) -> Result<Self> {
        let named = checkpoint::read_tensors(r)?;
        let mut params = Self::zeros(spec);
        let find = |name: &str| -> Result<&Tensor> {
            named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        for id in ParamId::ALL {
            let t = find(id.name())?;
            t.expect_shape("checkpoint", &spec.param_shape(id))?;
            *params.get_mut(id) = t.clone();
        }
        for l in 0..2 {
            let c = if l == 0 { spec.conv1_channels } else { spec.conv2_channels };
            let mean = find(&format!("enc.bn{}.running_mean", l + 1))?;
            let var = find(&format!("enc.bn{}.running_var", l + 1))?;
            mean.expect_shape("checkpoint", &[c])?;
            var.expect_shape("checkpoint", &[c])?;
            params.running[l] = BnStats { mean: mean.data().to_vec(), var: var.data().to_vec() };
        }
        Ok(params)
    }
}

/// Builds the 32x32 TinyConv model with seeded initial parameters.
pub fn build_tinyconv(rng: &Rng) -> Result<(ModelSpec, ModelParams)> {
    let spec = ModelSpec::tinyconv();
    Ok((spec, ModelParams::init(spec, rng)?))
}
