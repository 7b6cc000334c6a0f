use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv_out_dim, conv_transpose_out_dim};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Linear { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    /// Parameter-free change of the per-sample shape.
    Reshape { shape: Vec<usize> },
    /// Parameter-free `factor × factor` mean pooling.
    AvgPool { factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub bias: bool,
    pub batch_norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn linear(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec { kind: LayerKind::Linear { inputs, outputs }, bias: true, batch_norm: false, activation }
    }

    pub fn reshape(shape: &[usize]) -> Self {
        LayerSpec {
            kind: LayerKind::Reshape { shape: shape.to_vec() },
            bias: false,
            batch_norm: false,
            activation: Activation::Identity,
        }
    }

    pub fn avg_pool(factor: usize) -> Self {
        LayerSpec { kind: LayerKind::AvgPool { factor }, bias: false, batch_norm: false, activation: Activation::Identity }
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = true;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    /// Output channels (or features) of a weighted layer.
    pub fn out_channels(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Linear { outputs, .. } => Some(outputs),
            LayerKind::Conv2d { out_channels, .. } | LayerKind::ConvTranspose2d { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    pub fn kernel(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Conv2d { kernel, .. } | LayerKind::ConvTranspose2d { kernel, .. } => Some(kernel),
            _ => None,
        }
    }

    /// Shapes of this layer's parameters in declared order: weight, bias, gamma, beta.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let (weight, channels) = match self.kind {
            LayerKind::Linear { inputs, outputs } => (vec![inputs, outputs], outputs),
            LayerKind::Conv2d { in_channels, out_channels, kernel, .. } => {
                (vec![out_channels, in_channels, kernel, kernel], out_channels)
            }
            LayerKind::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
                (vec![in_channels, out_channels, kernel, kernel], out_channels)
            }
            LayerKind::Reshape { .. } | LayerKind::AvgPool { .. } => return Vec::new(),
        };
        let mut shapes = vec![weight];
        if self.bias {
            shapes.push(vec![channels]);
        }
        if self.batch_norm {
            shapes.push(vec![channels]);
            shapes.push(vec![channels]);
        }
        shapes
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::Structural(format!("layer {:?} cannot take per-sample input {input:?}", self.kind));
        match &self.kind {
            LayerKind::Linear { inputs, outputs } => {
                if input != [*inputs] {
                    return Err(bad());
                }
                Ok(vec![*outputs])
            }
            LayerKind::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                if input.len() != 3 || input[0] != *in_channels {
                    return Err(bad());
                }
                let h = conv_out_dim(input[1], *kernel, *stride, *padding).ok_or_else(bad)?;
                let w = conv_out_dim(input[2], *kernel, *stride, *padding).ok_or_else(bad)?;
                Ok(vec![*out_channels, h, w])
            }
            LayerKind::ConvTranspose2d { in_channels, out_channels, kernel, stride, padding } => {
                if input.len() != 3 || input[0] != *in_channels {
                    return Err(bad());
                }
                let h = conv_transpose_out_dim(input[1], *kernel, *stride, *padding).ok_or_else(bad)?;
                let w = conv_transpose_out_dim(input[2], *kernel, *stride, *padding).ok_or_else(bad)?;
                Ok(vec![*out_channels, h, w])
            }
            LayerKind::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(bad());
                }
                Ok(shape.clone())
            }
            LayerKind::AvgPool { factor } => {
                if input.len() != 3 || *factor == 0 || input[1] % factor != 0 || input[2] % factor != 0 {
                    return Err(bad());
                }
                Ok(vec![input[0], input[1] / factor, input[2] / factor])
            }
        }
    }
}

/// Ordered layer descriptors plus the per-sample input shape.
///
/// Parameter order is fixed by descriptor order; this order is the layout of
/// every [`ParameterVector`](crate::ParameterVector) for the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(name: &str, input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { name: name.into(), input_shape: input_shape.to_vec(), layers };
        spec.output_shape()?;
        Ok(spec)
    }

    /// Per-sample shapes entering each layer, followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap())
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(LayerSpec::param_shapes).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Layers that carry weights, in order.
    pub fn weighted_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.out_channels().is_some())
    }
}
