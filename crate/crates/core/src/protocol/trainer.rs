use alloc::format;

use crate::error::{Error, Result};
use crate::nn::{apply_gradient, discriminator_loss_fake, generator_loss, sample_latent, GanPair, OptimizerKind, OptimizerState};
use crate::params::ParameterVector;
use crate::rng::StreamRng;
use crate::tensor::{BatchNormMode, Scalar, Tensor};

/// The server-side half of one GAN: both models, their optimizers and the
/// latent stream feeding the fake batches.
///
/// The attacker drives the same type from its own streams.
#[derive(Debug, Clone)]
pub struct GanTrainer<T> {
    pub pair: GanPair<T>,
    pub opt_d: OptimizerState<T>,
    pub opt_g: OptimizerState<T>,
    latent: StreamRng,
    batch_size: usize,
}

impl<T: Scalar> GanTrainer<T> {
    pub fn new(pair: GanPair<T>, optimizer: OptimizerKind, latent: StreamRng, batch_size: usize) -> Self {
        let opt_d = OptimizerState::new(optimizer, pair.discriminator.param_count());
        let opt_g = OptimizerState::new(optimizer, pair.generator.param_count());
        GanTrainer { pair, opt_d, opt_g, latent, batch_size }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn latent_rng(&self) -> &StreamRng {
        &self.latent
    }

    /// `G(z)` for a fresh latent batch, batch norm in training mode.
    pub fn fake_batch(&mut self) -> Result<Tensor<T>> {
        let z = sample_latent(self.pair.latent_dim, self.batch_size, &mut self.latent);
        self.pair.generator.predict(&z, BatchNormMode::Train)
    }

    /// Adds the fake-data gradient on a fresh `G(z_t)` to `real_grad` and
    /// takes one discriminator step. Returns the fake-term loss.
    pub fn discriminator_step(&mut self, real_grad: &ParameterVector<T>) -> Result<T> {
        let fake = self.fake_batch()?;
        self.discriminator_step_with_fake(real_grad, &fake)
    }

    /// As [`discriminator_step`](Self::discriminator_step) with a caller-supplied fake batch.
    pub fn discriminator_step_with_fake(&mut self, real_grad: &ParameterVector<T>, fake: &Tensor<T>) -> Result<T> {
        let expected = self.pair.discriminator.param_count();
        if real_grad.len() != expected {
            return Err(Error::Structural(format!(
                "real-term gradient has {} entries, discriminator has {expected} parameters",
                real_grad.len()
            )));
        }
        let (loss, fake_grad) = discriminator_loss_fake(&mut self.pair.discriminator, fake)?;
        self.discriminator_step_with_gradients(real_grad, &fake_grad)?;
        Ok(loss)
    }

    /// One discriminator step on `real_grad + fake_grad`.
    pub fn discriminator_step_with_gradients(&mut self, real_grad: &ParameterVector<T>, fake_grad: &ParameterVector<T>) -> Result<()> {
        let combined = real_grad.add(fake_grad)?;
        if !combined.is_finite() {
            return Err(Error::Numerical("non-finite combined discriminator gradient".into()));
        }
        apply_gradient(&mut self.pair.discriminator, &mut self.opt_d, &combined)
    }

    /// One non-saturating generator step on a fresh latent batch `z'`.
    pub fn generator_step(&mut self) -> Result<T> {
        let z = sample_latent(self.pair.latent_dim, self.batch_size, &mut self.latent);
        let (loss, grad) = generator_loss(&mut self.pair.generator, &mut self.pair.discriminator, &z)?;
        apply_gradient(&mut self.pair.generator, &mut self.opt_g, &grad)?;
        Ok(loss)
    }
}
