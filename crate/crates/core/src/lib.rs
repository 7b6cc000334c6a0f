//! Split federated GAN training with unlabeled client data.
//!
//! Each user's GAN lives on the server. Clients only evaluate the real-data
//! term of the discriminator loss on their private batches and upload the
//! resulting gradient; the server adds its own fake-data gradient, steps the
//! discriminator, and trains the generator. The crate also carries an
//! eavesdropping attacker that replays captured uplink traffic into a shadow
//! GAN, and the metrics used to compare the two.
//!
//! The crate is `no_std` and needs only `alloc`; file and process IO live in
//! the `ufedgan` companion crate.

#![no_std]

extern crate alloc;

pub mod attacker;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod protocol;
pub mod rng;
pub mod tensor;
pub mod transport;

pub use error::{Error, ErrorKind, Result};
pub use params::{flatten_params, unflatten_params, ParameterVector};
pub use tensor::{Scalar, Tape, Tensor, Var};
