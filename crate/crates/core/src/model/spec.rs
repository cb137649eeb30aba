//! The TinyConv layer graph and its parameter inventory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinearity `f` applied to a latent before the generative pathway maps it down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => crate::ops::gelu::gelu(x),
            Activation::Identity => x,
        }
    }

    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => crate::ops::gelu::gelu_grad(x),
            Activation::Identity => 1.0,
        }
    }
}

/// Dimensions of the two-pathway convolutional model.
///
/// Encoder (V): conv(in→c1) | bn | gelu | maxpool2 | conv(c1→c2) | bn | gelu |
/// maxpool2 | flatten | linear(flat→hidden) | gelu | linear(hidden→classes).
///
/// Generator (W): linear(classes→hidden) | linear(hidden→flat) reshaped to
/// `c2 x side/4 x side/4` | interp2_nearest | conv(c2→c1).
///
/// Latent sites are the block outputs: x1 `c1 x side/2 x side/2`,
/// x2 `c2 x side/4 x side/4`, x3 `hidden`, x4 `classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub image_side: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub activation: Activation,
}

/// The trainable tensors, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    EncConv1W,
    EncConv1B,
    EncBn1Gamma,
    EncBn1Beta,
    EncConv2W,
    EncConv2B,
    EncBn2Gamma,
    EncBn2Beta,
    EncFc1W,
    EncFc1B,
    EncFc2W,
    EncFc2B,
    GenFc1W,
    GenFc1B,
    GenFc2W,
    GenFc2B,
    GenConvW,
    GenConvB,
}

impl ParamId {
    pub const ALL: [ParamId; 18] = [
        ParamId::EncConv1W,
        ParamId::EncConv1B,
        ParamId::EncBn1Gamma,
        ParamId::EncBn1Beta,
        ParamId::EncConv2W,
        ParamId::EncConv2B,
        ParamId::EncBn2Gamma,
        ParamId::EncBn2Beta,
        ParamId::EncFc1W,
        ParamId::EncFc1B,
        ParamId::EncFc2W,
        ParamId::EncFc2B,
        ParamId::GenFc1W,
        ParamId::GenFc1B,
        ParamId::GenFc2W,
        ParamId::GenFc2B,
        ParamId::GenConvW,
        ParamId::GenConvB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::EncConv1W => "enc.conv1.weight",
            ParamId::EncConv1B => "enc.conv1.bias",
            ParamId::EncBn1Gamma => "enc.bn1.weight",
            ParamId::EncBn1Beta => "enc.bn1.bias",
            ParamId::EncConv2W => "enc.conv2.weight",
            ParamId::EncConv2B => "enc.conv2.bias",
            ParamId::EncBn2Gamma => "enc.bn2.weight",
            ParamId::EncBn2Beta => "enc.bn2.bias",
            ParamId::EncFc1W => "enc.fc1.weight",
            ParamId::EncFc1B => "enc.fc1.bias",
            ParamId::EncFc2W => "enc.fc2.weight",
            ParamId::EncFc2B => "enc.fc2.bias",
            ParamId::GenFc1W => "gen.fc1.weight",
            ParamId::GenFc1B => "gen.fc1.bias",
            ParamId::GenFc2W => "gen.fc2.weight",
            ParamId::GenFc2B => "gen.fc2.bias",
            ParamId::GenConvW => "gen.conv.weight",
            ParamId::GenConvB => "gen.conv.bias",
        }
    }

    pub fn is_generative(self) -> bool {
        self.index() >= ParamId::GenFc1W.index()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3 { input: usize, output: usize },
    BatchNorm { channels: usize },
    Gelu,
    MaxPool2,
    Flatten,
    Linear { input: usize, output: usize },
    Reshape { shape: [usize; 3] },
    Interp2Nearest,
}

impl LayerKind {
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerKind::Conv3x3 { input, output } => output * input * 9 + output,
            LayerKind::BatchNorm { channels } => 2 * channels,
            LayerKind::Linear { input, output } => output * input + output,
            _ => 0,
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::tinyconv()
    }
}

impl ModelSpec {
    /// The 32x32 RGB, 10-class configuration.
    pub fn tinyconv() -> Self {
        Self {
            in_channels: 3,
            image_side: 32,
            conv1_channels: 32,
            conv2_channels: 64,
            hidden: 256,
            classes: 10,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.in_channels, self.conv1_channels, self.conv2_channels, self.hidden, self.classes];
        if dims.contains(&0) || self.image_side == 0 || self.image_side % 4 != 0 {
            return Err(Error::Invalid(format!("model spec {self:?}: sizes must be positive, side divisible by 4")));
        }
        Ok(())
    }

    pub fn pooled_side(&self) -> usize {
        self.image_side / 4
    }

    pub fn flat_dim(&self) -> usize {
        self.conv2_channels * self.pooled_side() * self.pooled_side()
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        vec![batch, self.in_channels, self.image_side, self.image_side]
    }

    /// Shape of latent site `site` (1-based, x1..x4) for a batch.
    pub fn site_shape(&self, site: usize, batch: usize) -> Vec<usize> {
        let half = self.image_side / 2;
        match site {
            1 => vec![batch, self.conv1_channels, half, half],
            2 => vec![batch, self.conv2_channels, self.pooled_side(), self.pooled_side()],
            3 => vec![batch, self.hidden],
            4 => vec![batch, self.classes],
            _ => panic!("latent site {site} out of range 1..=4"),
        }
    }

    /// Units per example at latent site `site`.
    pub fn site_units(&self, site: usize) -> usize {
        self.site_shape(site, 1).iter().product()
    }

    pub fn encoder_layers(&self) -> Vec<LayerKind> {
        vec![
            LayerKind::Conv3x3 { input: self.in_channels, output: self.conv1_channels },
            LayerKind::BatchNorm { channels: self.conv1_channels },
            LayerKind::Gelu,
            LayerKind::MaxPool2,
            LayerKind::Conv3x3 { input: self.conv1_channels, output: self.conv2_channels },
            LayerKind::BatchNorm { channels: self.conv2_channels },
            LayerKind::Gelu,
            LayerKind::MaxPool2,
            LayerKind::Flatten,
            LayerKind::Linear { input: self.flat_dim(), output: self.hidden },
            LayerKind::Gelu,
            LayerKind::Linear { input: self.hidden, output: self.classes },
        ]
    }

    pub fn generative_layers(&self) -> Vec<LayerKind> {
        let p = self.pooled_side();
        vec![
            LayerKind::Linear { input: self.classes, output: self.hidden },
            LayerKind::Linear { input: self.hidden, output: self.flat_dim() },
            LayerKind::Reshape { shape: [self.conv2_channels, p, p] },
            LayerKind::Interp2Nearest,
            LayerKind::Conv3x3 { input: self.conv2_channels, output: self.conv1_channels },
        ]
    }

    pub fn param_shape(&self, id: ParamId) -> Vec<usize> {
        let (c0, c1, c2, h, k, f) =
            (self.in_channels, self.conv1_channels, self.conv2_channels, self.hidden, self.classes, self.flat_dim());
        match id {
            ParamId::EncConv1W => vec![c1, c0, 3, 3],
            ParamId::EncConv1B | ParamId::EncBn1Gamma | ParamId::EncBn1Beta => vec![c1],
            ParamId::EncConv2W => vec![c2, c1, 3, 3],
            ParamId::EncConv2B | ParamId::EncBn2Gamma | ParamId::EncBn2Beta => vec![c2],
            ParamId::EncFc1W => vec![h, f],
            ParamId::EncFc1B => vec![h],
            ParamId::EncFc2W => vec![k, h],
            ParamId::EncFc2B => vec![k],
            ParamId::GenFc1W => vec![h, k],
            ParamId::GenFc1B => vec![h],
            ParamId::GenFc2W => vec![f, h],
            ParamId::GenFc2B => vec![f],
            ParamId::GenConvW => vec![c1, c2, 3, 3],
            ParamId::GenConvB => vec![c1],
        }
    }

    /// Fan-in used by the uniform initialiser (weights and biases of a layer share it).
    pub fn fan_in(&self, id: ParamId) -> Option<usize> {
        match id {
            ParamId::EncConv1W | ParamId::EncConv1B => Some(self.in_channels * 9),
            ParamId::EncConv2W | ParamId::EncConv2B => Some(self.conv1_channels * 9),
            ParamId::EncFc1W | ParamId::EncFc1B => Some(self.flat_dim()),
            ParamId::EncFc2W | ParamId::EncFc2B => Some(self.hidden),
            ParamId::GenFc1W | ParamId::GenFc1B => Some(self.classes),
            ParamId::GenFc2W | ParamId::GenFc2B => Some(self.hidden),
            ParamId::GenConvW | ParamId::GenConvB => Some(self.conv2_channels * 9),
            _ => None,
        }
    }

    /// Trainable parameters across both pathways (batch-norm running buffers excluded).
    pub fn parameter_count(&self) -> usize {
        self.encoder_layers()
            .iter()
            .chain(&self.generative_layers())
            .map(LayerKind::parameter_count)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tinyconv_has_expected_parameter_count() {
        let spec = ModelSpec::tinyconv();
        assert_eq!(spec.parameter_count(), 2_144_938);
        let from_shapes: usize =
            ParamId::ALL.iter().map(|&id| spec.param_shape(id).iter().product::<usize>()).sum();
        assert_eq!(from_shapes, 2_144_938);
    }

    #[test]
    fn per_layer_counts() {
        let counts: Vec<usize> = ModelSpec::tinyconv()
            .encoder_layers()
            .iter()
            .chain(&ModelSpec::tinyconv().generative_layers())
            .map(LayerKind::parameter_count)
            .filter(|&c| c > 0)
            .collect();
        assert_eq!(counts, vec![896, 64, 18_496, 128, 1_048_832, 2_570, 2_816, 1_052_672, 18_464]);
    }

    #[test]
    fn site_shapes_agree_between_pathways() {
        let s = ModelSpec::tinyconv();
        assert_eq!(s.site_shape(1, 2), vec![2, 32, 16, 16]);
        assert_eq!(s.site_shape(2, 2), vec![2, 64, 8, 8]);
        assert_eq!(s.flat_dim(), s.site_units(2));
        assert_eq!(s.site_units(3), 256);
        assert_eq!(s.site_units(4), 10);
    }
}
