use alloc::format;
use alloc::vec::Vec;

use super::spec::{Activation, LayerKind, ModelSpec};
use crate::error::{Error, Result};
use crate::params::{flatten_params, unflatten_params, ParameterVector};
use crate::rng::StreamRng;
use crate::tensor::{BatchNormMode, Gradients, RunningStats, Scalar, Tape, Tensor, Var};

/// Whether a forward pass registers the model's parameters as gradient leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Params {
    Trainable,
    Frozen,
}

/// Result of recording a model on a tape.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Var,
    /// One var per parameter tensor, in declared order.
    pub params: Vec<Var>,
}

/// A model instance: its spec, parameters, and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    params: Vec<Tensor<T>>,
    stats: Vec<RunningStats<T>>,
}

impl<T: Scalar> Model<T> {
    /// Draws initial weights from `rng`.
    ///
    /// Convolution weights ~ N(0, 0.02), batch-norm gamma ~ N(1, 0.02), beta = 0.
    /// Dense layers use U(-1/√fan_in, 1/√fan_in) for weights and biases.
    pub fn init(spec: ModelSpec, rng: &mut StreamRng) -> Result<Self> {
        spec.output_shape()?;
        let mut params = Vec::new();
        let mut stats = Vec::new();
        for layer in &spec.layers {
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let channels = layer.out_channels().unwrap();
            let mut shapes = shapes.into_iter();
            let w_shape = shapes.next().unwrap();
            let n: usize = w_shape.iter().product();
            match layer.kind {
                LayerKind::Linear { inputs, .. } => {
                    let bound = 1.0 / libm::sqrt(inputs as f64);
                    let w = (0..n).map(|_| T::from_f64((2.0 * rng.uniform() - 1.0) * bound)).collect();
                    params.push(Tensor::new(w_shape, w)?);
                    if layer.bias {
                        let b = (0..channels).map(|_| T::from_f64((2.0 * rng.uniform() - 1.0) * bound)).collect();
                        params.push(Tensor::new(shapes.next().unwrap(), b)?);
                    }
                }
                _ => {
                    let w = (0..n).map(|_| rng.normal::<T>(0.0, 0.02)).collect();
                    params.push(Tensor::new(w_shape, w)?);
                    if layer.bias {
                        params.push(Tensor::zeros(shapes.next().unwrap()));
                    }
                }
            }
            if layer.batch_norm {
                let gamma = (0..channels).map(|_| rng.normal::<T>(1.0, 0.02)).collect();
                params.push(Tensor::new(shapes.next().unwrap(), gamma)?);
                params.push(Tensor::zeros(shapes.next().unwrap()));
                stats.push(RunningStats::new(channels));
            }
        }
        Ok(Model { spec, params, stats })
    }

    /// Builds a model from an existing parameter vector (fresh running statistics).
    pub fn from_params(spec: ModelSpec, params: &[T]) -> Result<Self> {
        let tensors = unflatten_params(params, &spec.param_shapes())?;
        let stats = spec
            .layers
            .iter()
            .filter(|l| l.batch_norm)
            .map(|l| RunningStats::new(l.out_channels().unwrap()))
            .collect();
        Ok(Model { spec, params: tensors, stats })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    pub fn flatten(&self) -> ParameterVector<T> {
        flatten_params(&self.params)
    }

    /// Overwrites all parameters from a flattened vector in declared order.
    pub fn load(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters supplied to {} with {}",
                values.len(),
                self.spec.name,
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in &mut self.params {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Records the model on `tape`.
    ///
    /// With `final_activation == false` the last layer's activation is skipped,
    /// which yields logits for a sigmoid-terminated discriminator.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        input: Var,
        mode: BatchNormMode,
        params: Params,
        final_activation: bool,
    ) -> Result<ForwardPass> {
        let batch = tape.shape(input).first().copied().unwrap_or(1);
        let mut expected = alloc::vec![batch];
        expected.extend_from_slice(&self.spec.input_shape);
        let mut x = if tape.shape(input) == expected.as_slice() {
            input
        } else if tape.value(input).len() == expected.iter().product::<usize>() && tape.shape(input).len() == 2 {
            tape.reshape(input, &expected)?
        } else {
            return Err(Error::Dimension(format!(
                "{} expects input {:?}, got {:?}",
                self.spec.name,
                expected,
                tape.shape(input)
            )));
        };
        let mut vars = Vec::with_capacity(self.params.len());
        let mut next_param = 0;
        let mut next_stats = 0;
        let last_weighted = self.spec.layers.iter().rposition(|l| l.out_channels().is_some());
        for (li, layer) in self.spec.layers.iter().enumerate() {
            let mut take = |tape: &mut Tape<T>| -> Result<Var> {
                let t = &self.params[next_param];
                next_param += 1;
                let v = match params {
                    Params::Trainable => tape.leaf(t)?,
                    Params::Frozen => tape.constant(t)?,
                };
                vars.push(v);
                Ok(v)
            };
            x = match &layer.kind {
                LayerKind::Linear { .. } => {
                    let w = take(tape)?;
                    let y = tape.matmul(x, w)?;
                    if layer.bias {
                        let b = take(tape)?;
                        tape.bias_add(y, b)?
                    } else {
                        y
                    }
                }
                LayerKind::Conv2d { stride, padding, .. } => {
                    let w = take(tape)?;
                    let y = tape.conv2d(x, w, *stride, *padding)?;
                    if layer.bias {
                        let b = take(tape)?;
                        tape.bias_add(y, b)?
                    } else {
                        y
                    }
                }
                LayerKind::ConvTranspose2d { stride, padding, .. } => {
                    let w = take(tape)?;
                    let y = tape.conv_transpose2d(x, w, *stride, *padding)?;
                    if layer.bias {
                        let b = take(tape)?;
                        tape.bias_add(y, b)?
                    } else {
                        y
                    }
                }
                LayerKind::Reshape { shape } => {
                    let mut s = alloc::vec![batch];
                    s.extend_from_slice(shape);
                    tape.reshape(x, &s)?
                }
                LayerKind::AvgPool { factor } => tape.avg_pool2d(x, *factor)?,
            };
            if layer.batch_norm {
                let gamma = take(tape)?;
                let beta = take(tape)?;
                let stats = &mut self.stats[next_stats];
                next_stats += 1;
                x = tape.batchnorm(x, gamma, beta, stats, mode)?;
            }
            if !final_activation && Some(li) == last_weighted {
                continue;
            }
            x = match layer.activation {
                Activation::Identity => x,
                Activation::Relu => tape.relu(x)?,
                Activation::LeakyRelu { slope } => tape.leaky_relu(x, T::from_f64(slope))?,
                Activation::Tanh => tape.tanh(x)?,
                Activation::Sigmoid => tape.sigmoid(x)?,
            };
        }
        Ok(ForwardPass { output: x, params: vars })
    }

    /// Plain inference: full forward pass without gradient tracking.
    pub fn predict(&mut self, input: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(input)?;
        let fp = self.forward(&mut tape, x, mode, Params::Frozen, true)?;
        Ok(tape.tensor(fp.output))
    }

    /// Activations feeding the last weighted layer (the penultimate embedding).
    pub fn features(&mut self, input: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
        let n = match self.spec.layers.iter().rposition(|l| l.out_channels().is_some()) {
            Some(n) if n > 0 => n,
            _ => return Err(Error::Structural(format!("{} has no hidden layer", self.spec.name))),
        };
        let head = ModelSpec {
            name: self.spec.name.clone(),
            input_shape: self.spec.input_shape.clone(),
            layers: self.spec.layers[..n].to_vec(),
        };
        let params = head.param_shapes().len();
        let bn = head.layers.iter().filter(|l| l.batch_norm).count();
        let mut trunk = Model { spec: head, params: self.params[..params].to_vec(), stats: self.stats[..bn].to_vec() };
        trunk.predict(input, mode)
    }
}

/// Collects gradients for `vars` into a flattened vector in order.
pub fn gradient_vector<T: Scalar>(grads: &Gradients<T>, vars: &[Var]) -> Result<ParameterVector<T>> {
    let mut out = Vec::new();
    for v in vars {
        let g = grads
            .get(*v)
            .ok_or_else(|| Error::State("requested gradient of a non-leaf".into()))?;
        out.extend_from_slice(g);
    }
    Ok(ParameterVector::new(out))
}
