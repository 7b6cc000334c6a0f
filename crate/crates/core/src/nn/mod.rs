//! Layers, models, optimizers and the GAN model families.

mod gan;
mod model;
mod optim;
mod spec;

pub use gan::{
    build_dcgan_discriminator, build_dcgan_generator, build_toy_gan, check_compatible, discriminator_loss_fake,
    discriminator_loss_real, gan_specs, generate, generator_loss, dcgan_discriminator_spec, dcgan_generator_spec,
    sample_latent, GanPair, GanSpec, Profile, DCGAN_DATA_SIZE, DCGAN_LATENT_DIM,
};
pub use model::{gradient_vector, ForwardPass, Model, Params};
pub use optim::{apply_gradient, OptimizerKind, OptimizerState};
pub use spec::{Activation, LayerKind, LayerSpec, ModelSpec};
