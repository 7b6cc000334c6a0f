use alloc::format;

use super::message::{MessageBody, ProtocolMessage};
use crate::data::UnlabeledView;
use crate::error::{Error, Result};
use crate::nn::{discriminator_loss_real, Model, ModelSpec};
use crate::rng::{client_batch_stream, StreamRng};
use crate::tensor::Scalar;

/// Work done by one client, for auditing its footprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientCounters {
    pub forward_passes: u64,
    pub backward_passes: u64,
    pub steps: u64,
    /// Generator parameters ever allocated by the client.
    pub generator_allocations: u64,
    /// Optimizer steps ever taken by the client.
    pub optimizer_steps: u64,
}

/// A user device: private unlabeled data and a copy of the latest
/// discriminator weights. It has no generator and no optimizer.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    user: u32,
    data: UnlabeledView<T>,
    sampler: StreamRng,
    batch_size: usize,
    discriminator: Model<T>,
    counters: ClientCounters,
    seq: u64,
}

impl<T: Scalar> ClientState<T> {
    /// The batch sampler draws from the `client-batch:u` stream of `seed`.
    pub fn new(user: u32, data: UnlabeledView<T>, spec: ModelSpec, batch_size: usize, seed: u64) -> Result<Self> {
        let discriminator = Model::from_params(spec.clone(), &alloc::vec![T::zero(); spec.param_count()])?;
        Ok(ClientState {
            user,
            data,
            sampler: StreamRng::new(seed, &client_batch_stream(user)),
            batch_size,
            discriminator,
            counters: ClientCounters::default(),
            seq: 0,
        })
    }

    pub fn user(&self) -> u32 {
        self.user
    }

    pub fn counters(&self) -> ClientCounters {
        self.counters
    }

    pub fn data(&self) -> &UnlabeledView<T> {
        &self.data
    }

    pub fn discriminator(&self) -> &Model<T> {
        &self.discriminator
    }

    /// Loads the received weights, evaluates the real-data loss on one local
    /// batch, and returns its gradient and value.
    pub fn client_step(&mut self, msg: &ProtocolMessage<T>) -> Result<ProtocolMessage<T>> {
        let MessageBody::DiscriminatorDown { weights } = &msg.body else {
            return Err(Error::Protocol(format!("client {} cannot answer {}", self.user, msg.kind())));
        };
        if msg.user != self.user {
            return Err(Error::Protocol(format!("message for user {} delivered to user {}", msg.user, self.user)));
        }
        if weights.len() != self.discriminator.param_count() {
            return Err(Error::Protocol(format!(
                "received {} weights, discriminator spec has {}",
                weights.len(),
                self.discriminator.param_count()
            )));
        }
        if self.data.is_empty() {
            return Err(Error::Data(format!("client {} holds no samples", self.user)));
        }
        self.discriminator.load(weights)?;
        let batch = self.data.batch(self.batch_size, &mut self.sampler)?;
        let (loss, gradient) = discriminator_loss_real(&mut self.discriminator, &batch)?;
        self.counters.forward_passes += 1;
        self.counters.backward_passes += 1;
        self.counters.steps += 1;
        let reply = ProtocolMessage {
            user: self.user,
            round: msg.round,
            step: msg.step,
            seq: self.seq,
            body: MessageBody::ClientUpdateUp { gradient, loss: loss.as_f64() },
        };
        self.seq += 1;
        Ok(reply)
    }
}
