use alloc::format;
use alloc::vec;

use serde::{Deserialize, Serialize};

use super::model::{gradient_vector, Model, Params};
use super::spec::{Activation, LayerKind, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::rng::StreamRng;
use crate::tensor::{BatchNormMode, Scalar, Tape, Tensor};

/// Latent width of the DCGAN generator.
pub const DCGAN_LATENT_DIM: usize = 100;
/// Resolution the DCGAN discriminator consumes; the generator renders twice
/// this size and mean-pools down.
pub const DCGAN_DATA_SIZE: usize = 32;
const LEAKY_SLOPE: f64 = 0.2;

/// Model families known to the builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Gaussian1d,
    #[serde(rename = "gaussian-mixture-2d", alias = "mixture2d")]
    GaussianMixture2d,
    #[serde(rename = "tiny-image-16x16")]
    TinyImage16,
    #[serde(rename = "dcgan-32")]
    Dcgan32,
}

impl Profile {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian1d" => Ok(Profile::Gaussian1d),
            "gaussian-mixture-2d" | "mixture2d" => Ok(Profile::GaussianMixture2d),
            "tiny-image-16x16" => Ok(Profile::TinyImage16),
            "dcgan-32" => Ok(Profile::Dcgan32),
            other => Err(Error::Config(format!("unknown model profile `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Gaussian1d => "gaussian1d",
            Profile::GaussianMixture2d => "gaussian-mixture-2d",
            Profile::TinyImage16 => "tiny-image-16x16",
            Profile::Dcgan32 => "dcgan-32",
        }
    }

    /// Per-sample data shape the profile's discriminator consumes.
    pub fn data_shape(self, channels: usize) -> alloc::vec::Vec<usize> {
        match self {
            Profile::Gaussian1d => vec![1],
            Profile::GaussianMixture2d => vec![2],
            Profile::TinyImage16 => vec![1, 16, 16],
            Profile::Dcgan32 => vec![channels, DCGAN_DATA_SIZE, DCGAN_DATA_SIZE],
        }
    }
}

fn deconv(cin: usize, cout: usize, stride: usize, padding: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::ConvTranspose2d { in_channels: cin, out_channels: cout, kernel: 4, stride, padding },
        bias: false,
        batch_norm: true,
        activation,
    }
}

fn conv(cin: usize, cout: usize, stride: usize, padding: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind: LayerKind::Conv2d { in_channels: cin, out_channels: cout, kernel: 4, stride, padding },
        bias: false,
        batch_norm: true,
        activation,
    }
}

/// DCGAN generator: five 4×4 transposed convolutions 100 → 1024 → 512 → 256 → 128 → C,
/// batch norm and ReLU on all but the last, Tanh on the last; 64×64 output.
pub fn dcgan_generator_spec(out_channels: usize) -> ModelSpec {
    let mut last = deconv(128, out_channels, 2, 1, Activation::Tanh);
    last.batch_norm = false;
    ModelSpec::new(
        "dcgan-generator",
        &[DCGAN_LATENT_DIM],
        vec![
            LayerSpec::reshape(&[DCGAN_LATENT_DIM, 1, 1]),
            deconv(DCGAN_LATENT_DIM, 1024, 1, 0, Activation::Relu),
            deconv(1024, 512, 2, 1, Activation::Relu),
            deconv(512, 256, 2, 1, Activation::Relu),
            deconv(256, 128, 2, 1, Activation::Relu),
            last,
        ],
    )
    .expect("static DCGAN generator geometry")
}

/// DCGAN discriminator on 32×32 inputs: four 4×4 convolutions C → 256 → 512 → 1024 → 1,
/// batch norm and LeakyReLU before the last, Sigmoid on the last.
pub fn dcgan_discriminator_spec(in_channels: usize) -> ModelSpec {
    let leaky = Activation::LeakyRelu { slope: LEAKY_SLOPE };
    let mut last = conv(1024, 1, 1, 0, Activation::Sigmoid);
    last.batch_norm = false;
    ModelSpec::new(
        "dcgan-discriminator",
        &[in_channels, DCGAN_DATA_SIZE, DCGAN_DATA_SIZE],
        vec![
            conv(in_channels, 256, 2, 1, leaky),
            conv(256, 512, 2, 1, leaky),
            conv(512, 1024, 2, 1, leaky),
            last,
            LayerSpec::reshape(&[1]),
        ],
    )
    .expect("static DCGAN discriminator geometry")
}

pub fn build_dcgan_generator<T: Scalar>(out_channels: usize, rng: &mut StreamRng) -> Result<Model<T>> {
    Model::init(dcgan_generator_spec(out_channels), rng)
}

pub fn build_dcgan_discriminator<T: Scalar>(in_channels: usize, rng: &mut StreamRng) -> Result<Model<T>> {
    if in_channels == 0 {
        return Err(Error::Config("discriminator needs at least one input channel".into()));
    }
    Model::init(dcgan_discriminator_spec(in_channels), rng)
}

/// Generator and discriminator specs plus latent width for a profile.
pub fn gan_specs(profile: Profile, channels: usize) -> Result<(ModelSpec, ModelSpec, usize)> {
    let leaky = Activation::LeakyRelu { slope: LEAKY_SLOPE };
    let relu = Activation::Relu;
    let specs = match profile {
        Profile::Gaussian1d => (
            ModelSpec::new("gaussian1d-generator", &[8], vec![LayerSpec::linear(8, 32, relu), LayerSpec::linear(32, 1, Activation::Identity)])?,
            ModelSpec::new("gaussian1d-discriminator", &[1], vec![LayerSpec::linear(1, 32, leaky), LayerSpec::linear(32, 1, Activation::Sigmoid)])?,
            8,
        ),
        Profile::GaussianMixture2d => (
            ModelSpec::new(
                "mixture2d-generator",
                &[8],
                vec![LayerSpec::linear(8, 64, relu), LayerSpec::linear(64, 64, relu), LayerSpec::linear(64, 2, Activation::Identity)],
            )?,
            ModelSpec::new(
                "mixture2d-discriminator",
                &[2],
                vec![LayerSpec::linear(2, 64, leaky), LayerSpec::linear(64, 64, leaky), LayerSpec::linear(64, 1, Activation::Sigmoid)],
            )?,
            8,
        ),
        Profile::TinyImage16 => (
            ModelSpec::new(
                "tiny-image-generator",
                &[32],
                vec![
                    LayerSpec::linear(32, 128, relu).with_batch_norm(),
                    LayerSpec::linear(128, 256, relu).with_batch_norm(),
                    LayerSpec::linear(256, 256, Activation::Tanh),
                    LayerSpec::reshape(&[1, 16, 16]),
                ],
            )?,
            ModelSpec::new(
                "tiny-image-discriminator",
                &[1, 16, 16],
                vec![
                    LayerSpec::reshape(&[256]),
                    LayerSpec::linear(256, 128, leaky),
                    LayerSpec::linear(128, 1, Activation::Sigmoid),
                ],
            )?,
            32,
        ),
        Profile::Dcgan32 => {
            let mut g = dcgan_generator_spec(channels);
            g.name = "dcgan-generator-pooled".into();
            g.layers.push(LayerSpec::avg_pool(2));
            g.output_shape()?;
            (g, dcgan_discriminator_spec(channels), DCGAN_LATENT_DIM)
        }
    };
    Ok(specs)
}

/// Architecture of a GAN: both model specs plus the latent width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSpec {
    pub generator: ModelSpec,
    pub discriminator: ModelSpec,
    pub latent_dim: usize,
}

impl GanSpec {
    pub fn new(generator: ModelSpec, discriminator: ModelSpec, latent_dim: usize) -> Result<Self> {
        check_compatible(&generator, &discriminator, latent_dim)?;
        Ok(GanSpec { generator, discriminator, latent_dim })
    }

    pub fn for_profile(profile: Profile, channels: usize) -> Result<Self> {
        let (g, d, latent) = gan_specs(profile, channels)?;
        Self::new(g, d, latent)
    }

    /// Draws generator then discriminator weights from `rng`.
    pub fn init<T: Scalar>(&self, rng: &mut StreamRng) -> Result<GanPair<T>> {
        let generator = Model::init(self.generator.clone(), rng)?;
        let discriminator = Model::init(self.discriminator.clone(), rng)?;
        GanPair::new(generator, discriminator, self.latent_dim)
    }
}

/// A generator/discriminator pair with compatible shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GanPair<T> {
    pub generator: Model<T>,
    pub discriminator: Model<T>,
    pub latent_dim: usize,
}

impl<T: Scalar> GanPair<T> {
    pub fn new(generator: Model<T>, discriminator: Model<T>, latent_dim: usize) -> Result<Self> {
        check_compatible(generator.spec(), discriminator.spec(), latent_dim)?;
        Ok(GanPair { generator, discriminator, latent_dim })
    }

    /// Initializes both models from one stream: generator first, then discriminator.
    pub fn init(profile: Profile, channels: usize, rng: &mut StreamRng) -> Result<Self> {
        GanSpec::for_profile(profile, channels)?.init(rng)
    }

    pub fn spec(&self) -> GanSpec {
        GanSpec {
            generator: self.generator.spec().clone(),
            discriminator: self.discriminator.spec().clone(),
            latent_dim: self.latent_dim,
        }
    }

    /// Draws `n` standard-normal latent vectors.
    pub fn sample_latent(&self, n: usize, rng: &mut StreamRng) -> Tensor<T> {
        sample_latent(self.latent_dim, n, rng)
    }
}

pub fn sample_latent<T: Scalar>(latent_dim: usize, n: usize, rng: &mut StreamRng) -> Tensor<T> {
    let data = (0..n * latent_dim).map(|_| rng.normal::<T>(0.0, 1.0)).collect();
    Tensor::new(vec![n, latent_dim], data).expect("latent shape")
}

/// Checks that G's output feeds D and that D emits one scalar per sample.
pub fn check_compatible(g: &ModelSpec, d: &ModelSpec, latent_dim: usize) -> Result<()> {
    if g.input_shape != [latent_dim] {
        return Err(Error::Structural(format!("generator input {:?} is not [{latent_dim}]", g.input_shape)));
    }
    let g_out = g.output_shape()?;
    if g_out != d.input_shape {
        return Err(Error::Structural(format!(
            "generator output {:?} does not match discriminator input {:?}",
            g_out, d.input_shape
        )));
    }
    if d.output_shape()? != [1] {
        return Err(Error::Structural("discriminator must emit one scalar per sample".into()));
    }
    let last = d.weighted_layers().last().map(|l| l.activation);
    if last != Some(Activation::Sigmoid) {
        return Err(Error::Structural("discriminator must end in a sigmoid".into()));
    }
    Ok(())
}

pub fn build_toy_gan<T: Scalar>(profile: Profile, rng: &mut StreamRng) -> Result<GanPair<T>> {
    if profile == Profile::Dcgan32 {
        return Err(Error::Config("dcgan-32 is not a toy profile".into()));
    }
    GanPair::init(profile, 1, rng)
}

fn discriminator_term<T: Scalar>(d: &mut Model<T>, batch: &Tensor<T>, target: f64) -> Result<(T, ParameterVector<T>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut tape = Tape::new();
    let x = tape.constant(batch)?;
    let fp = d.forward(&mut tape, x, BatchNormMode::Train, Params::Trainable, false)?;
    let targets = Tensor::full(tape.shape(fp.output).to_vec(), T::from_f64(target));
    let loss = tape.bce_with_logits(fp.output, &targets)?;
    let value = tape.scalar_value(loss)?;
    let grads = tape.backward(loss)?;
    Ok((value, gradient_vector(&grads, &fp.params)?))
}

/// Mean BCE of `D` on real samples (target 1) and its parameter gradient.
/// Weights are not modified.
pub fn discriminator_loss_real<T: Scalar>(d: &mut Model<T>, batch: &Tensor<T>) -> Result<(T, ParameterVector<T>)> {
    discriminator_term(d, batch, 1.0)
}

/// Mean BCE of `D` on generated samples (target 0) and its parameter gradient.
pub fn discriminator_loss_fake<T: Scalar>(d: &mut Model<T>, fake: &Tensor<T>) -> Result<(T, ParameterVector<T>)> {
    discriminator_term(d, fake, 0.0)
}

/// Non-saturating generator loss `-mean log D(G(z))` and the generator's gradient.
///
/// `D` is recorded as constants; its weights and running statistics are untouched.
pub fn generator_loss<T: Scalar>(g: &mut Model<T>, d: &mut Model<T>, latent: &Tensor<T>) -> Result<(T, ParameterVector<T>)> {
    if latent.is_empty() {
        return Err(Error::Contract("empty latent batch".into()));
    }
    let mut tape = Tape::new();
    let z = tape.constant(latent)?;
    let gf = g.forward(&mut tape, z, BatchNormMode::Train, Params::Trainable, true)?;
    let df = d.forward(&mut tape, gf.output, BatchNormMode::TrainFrozenStats, Params::Frozen, false)?;
    let targets = Tensor::full(tape.shape(df.output).to_vec(), T::one());
    let loss = tape.bce_with_logits(df.output, &targets)?;
    let value = tape.scalar_value(loss)?;
    let grads = tape.backward(loss)?;
    Ok((value, gradient_vector(&grads, &gf.params)?))
}

/// Generator forward without gradient tracking.
pub fn generate<T: Scalar>(g: &mut Model<T>, latent: &Tensor<T>, mode: BatchNormMode) -> Result<Tensor<T>> {
    g.predict(latent, mode)
}
