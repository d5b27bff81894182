//! The VGG-19 convolutional trunk: sixteen 3x3 convolutions with ReLU in
//! five stages, each stage closed by a 2x2 pooling.
//!
//! Only the input gradient is ever needed (pixels are optimized, filters
//! never are), so the backward pass carries no weight gradients.

mod conv;
mod io;
mod net;
mod pool;
mod random;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub use conv::{conv2d, conv2d_backward_input};
pub use io::{decode_weights, encode_weights, load_weights, save_weights, MAGIC};
pub use net::{backward_to_input, forward, ActivationCache, ContentSeed};
pub use pool::{pool2x2, pool2x2_backward, Pooled};
pub use random::{layer_variance, random_base_weights, randomize_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    Max,
    Average,
}

impl PoolingMode {
    pub fn name(self) -> &'static str {
        match self {
            PoolingMode::Max => "max",
            PoolingMode::Average => "average",
        }
    }
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(PoolingMode::Max),
            "average" | "avg" | "mean" => Ok(PoolingMode::Average),
            _ => Err(Error::Config(format!("unknown pooling mode {s:?}"))),
        }
    }
}

/// Layer whose pre-activation output serves as the content features.
///
/// Each variant names the last convolution of a stage (`Conv5_4` is the
/// last convolution of the fifth stage).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ContentLayer {
    #[serde(rename = "conv3_4")]
    Conv3_4,
    #[serde(rename = "conv4_4")]
    Conv4_4,
    #[default]
    #[serde(rename = "conv5_4")]
    Conv5_4,
}

impl ContentLayer {
    pub const ALL: [ContentLayer; 3] = [ContentLayer::Conv3_4, ContentLayer::Conv4_4, ContentLayer::Conv5_4];

    /// Zero-based stage index.
    pub fn stage(self) -> usize {
        match self {
            ContentLayer::Conv3_4 => 2,
            ContentLayer::Conv4_4 => 3,
            ContentLayer::Conv5_4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContentLayer::Conv3_4 => "conv3_4",
            ContentLayer::Conv4_4 => "conv4_4",
            ContentLayer::Conv5_4 => "conv5_4",
        }
    }
}

impl std::str::FromStr for ContentLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "conv3_4" => Ok(ContentLayer::Conv3_4),
            "conv4_4" => Ok(ContentLayer::Conv4_4),
            "conv5_4" => Ok(ContentLayer::Conv5_4),
            _ => Err(Error::Config(format!("unknown content layer {s:?}"))),
        }
    }
}

/// Stage layout of a VGG-style trunk: `(convolutions, width)` per stage,
/// with a 2x2 pooling after every stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    input_channels: usize,
    stages: Vec<(usize, usize)>,
}

impl Topology {
    pub fn vgg19() -> Self {
        Topology {
            input_channels: 3,
            stages: vec![(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)],
        }
    }

    /// A custom trunk. Used for small-scale gradient checks, where the
    /// 32-pixel minimum of VGG-19 would make finite differences expensive.
    pub fn custom(input_channels: usize, stages: Vec<(usize, usize)>) -> Result<Self> {
        if input_channels == 0 || stages.is_empty() || stages.iter().any(|&(n, w)| n == 0 || w == 0) {
            return Err(Error::InvalidArgument("degenerate topology".into()));
        }
        Ok(Topology {
            input_channels,
            stages,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn layer_count(&self) -> usize {
        self.stages.iter().map(|s| s.0).sum()
    }

    /// `(in_channels, out_channels)` of every convolution, in order.
    pub fn channel_plan(&self) -> Vec<(usize, usize)> {
        let mut plan = Vec::with_capacity(self.layer_count());
        let mut width = self.input_channels;
        for &(convs, out) in &self.stages {
            for _ in 0..convs {
                plan.push((width, out));
                width = out;
            }
        }
        plan
    }

    /// Indices of the convolutions followed by a pooling stage.
    pub fn pooled_layers(&self) -> Vec<usize> {
        let mut acc = 0;
        self.stages
            .iter()
            .map(|&(convs, _)| {
                acc += convs;
                acc - 1
            })
            .collect()
    }

    pub fn stage_widths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.1).collect()
    }

    /// Last convolution of zero-based `stage`.
    pub fn last_conv_of_stage(&self, stage: usize) -> Result<usize> {
        self.pooled_layers().get(stage).copied().ok_or_else(|| {
            Error::Config(format!(
                "topology has {} stages, no stage {}",
                self.stage_count(),
                stage + 1
            ))
        })
    }

    pub fn content_index(&self, layer: ContentLayer) -> Result<usize> {
        self.last_conv_of_stage(layer.stage())
    }

    /// Smallest side that survives every pooling with at least one pixel.
    pub fn min_input_side(&self) -> usize {
        1 << self.stage_count()
    }
}

/// One 3x3 convolution: kernel in `(out, in, 3, 3)` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        ConvLayer {
            out_channels,
            in_channels,
            kernel: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * 9
    }

    fn validate(&self) -> Result<()> {
        if self.kernel.len() != self.out_channels * self.in_channels * 9 || self.bias.len() != self.out_channels {
            return Err(Error::Shape(format!(
                "conv layer {}x{}x3x3 has {} kernel and {} bias values",
                self.out_channels,
                self.in_channels,
                self.kernel.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect();
        ConvLayer {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernel: conv(&self.kernel),
            bias: conv(&self.bias),
        }
    }
}

/// Filter bank of a trunk: one [`ConvLayer`] per convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct VggWeights<T = f32> {
    topology: Topology,
    layers: Vec<ConvLayer<T>>,
}

impl<T: Scalar> VggWeights<T> {
    pub fn new(topology: Topology, layers: Vec<ConvLayer<T>>) -> Result<Self> {
        let plan = topology.channel_plan();
        if plan.len() != layers.len() {
            return Err(Error::Shape(format!(
                "topology has {} convolutions, got {} layers",
                plan.len(),
                layers.len()
            )));
        }
        for (i, (layer, &(cin, cout))) in layers.iter().zip(&plan).enumerate() {
            layer.validate()?;
            if layer.in_channels != cin || layer.out_channels != cout {
                return Err(Error::Shape(format!(
                    "layer {} is {}->{}, topology wants {}->{}",
                    i + 1,
                    layer.in_channels,
                    layer.out_channels,
                    cin,
                    cout
                )));
            }
        }
        Ok(VggWeights { topology, layers })
    }

    pub fn zeros(topology: Topology) -> Self {
        let layers = topology
            .channel_plan()
            .into_iter()
            .map(|(cin, cout)| ConvLayer::zeros(cout, cin))
            .collect();
        VggWeights { topology, layers }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> VggWeights<U> {
        VggWeights {
            topology: self.topology.clone(),
            layers: self.layers.iter().map(ConvLayer::cast).collect(),
        }
    }
}
