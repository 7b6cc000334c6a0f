use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::message::{MessageBody, ProtocolMessage};
use super::monitor::{ConvergenceMonitor, StopReason};
use super::trainer::GanTrainer;
use crate::error::{Error, Result};
use crate::nn::{sample_latent, GanSpec, OptimizerKind};
use crate::params::ParameterVector;
use crate::rng::{latent_stream, server_init_stream, StreamRng};
use crate::tensor::{BatchNormMode, Scalar, Tensor};

/// Protocol hyperparameters shared by every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Protocol steps `T` per round.
    pub steps_per_round: u32,
    /// Client batch size; the latent batch has the same size.
    pub batch_size: usize,
    pub max_rounds: u32,
    /// Plateau window `W`.
    pub window: usize,
    /// Plateau threshold on the IS improvement.
    pub epsilon: f64,
    /// Generated samples scored per round.
    pub is_samples: usize,
    pub is_splits: usize,
    pub optimizer: OptimizerKind,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            steps_per_round: 5,
            batch_size: 64,
            max_rounds: 300,
            window: 10,
            epsilon: 0.05,
            is_samples: 1024,
            is_splits: 10,
            optimizer: OptimizerKind::dcgan_adam(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_round == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps per round and batch size must be positive".into()));
        }
        if self.window == 0 || !(self.epsilon.is_finite()) {
            return Err(Error::Config("plateau window must be positive and epsilon finite".into()));
        }
        if self.is_splits == 0 || self.is_samples < 2 * self.is_splits {
            return Err(Error::Config(format!(
                "{} IS samples cannot fill {} splits of at least two",
                self.is_samples, self.is_splits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    AwaitingReply { round: u32, step: u32 },
    DiscriminatorDone,
}

/// Server-side state of one user.
#[derive(Debug, Clone)]
pub struct UserSlot<T> {
    pub trainer: GanTrainer<T>,
    pub monitor: ConvergenceMonitor,
    eval_latent: StreamRng,
    /// Completed rounds.
    rounds: u32,
    /// Completed steps within the current round.
    step: u32,
    phase: Phase,
    seq_down: u64,
    last_up: Option<u64>,
}

impl<T: Scalar> UserSlot<T> {
    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn step_in_round(&self) -> u32 {
        self.step
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.monitor.stop_reason()
    }
}

/// The cloud server: one GAN per user, trained from client gradients.
#[derive(Debug, Clone)]
pub struct ServerState<T> {
    seed: u64,
    config: ProtocolConfig,
    spec: GanSpec,
    users: Vec<UserSlot<T>>,
}

/// Builds an independent GAN per user from the `server-init:u` streams.
pub fn server_init<T: Scalar>(num_users: usize, spec: &GanSpec, config: &ProtocolConfig, seed: u64) -> Result<ServerState<T>> {
    if num_users == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    config.validate()?;
    let users = (0..num_users as u32)
        .map(|u| {
            let mut init = StreamRng::new(seed, &server_init_stream(u));
            let pair = spec.init(&mut init)?;
            let latent = StreamRng::new(seed, &latent_stream(u));
            Ok(UserSlot {
                trainer: GanTrainer::new(pair, config.optimizer, latent, config.batch_size),
                monitor: ConvergenceMonitor::new(config.window, config.epsilon, config.max_rounds),
                eval_latent: StreamRng::new(seed, &format!("eval-latent:{u}")),
                rounds: 0,
                step: 0,
                phase: Phase::Idle,
                seq_down: 0,
                last_up: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ServerState { seed, config: config.clone(), spec: spec.clone(), users })
}

impl<T: Scalar> ServerState<T> {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn spec(&self) -> &GanSpec {
        &self.spec
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, user: u32) -> Result<&UserSlot<T>> {
        self.users.get(user as usize).ok_or_else(|| Error::Protocol(format!("unknown user {user}")))
    }

    pub fn user_mut(&mut self, user: u32) -> Result<&mut UserSlot<T>> {
        self.users.get_mut(user as usize).ok_or_else(|| Error::Protocol(format!("unknown user {user}")))
    }

    /// Opens the next protocol step for `user` and returns the weights to send.
    pub fn discriminator_down(&mut self, user: u32) -> Result<ProtocolMessage<T>> {
        let slot = self.user_mut(user)?;
        if slot.phase != Phase::Idle {
            return Err(Error::Protocol(format!("user {user} already has a step in flight")));
        }
        let (round, step) = (slot.rounds + 1, slot.step + 1);
        slot.phase = Phase::AwaitingReply { round, step };
        let seq = slot.seq_down;
        slot.seq_down += 1;
        let weights = slot.trainer.pair.discriminator.flatten();
        Ok(ProtocolMessage { user, round, step, seq, body: MessageBody::DiscriminatorDown { weights } })
    }

    fn accept(&mut self, reply: &ProtocolMessage<T>) -> Result<(ParameterVector<T>, f64)> {
        let slot = self.user_mut(reply.user)?;
        let MessageBody::ClientUpdateUp { gradient, loss } = &reply.body else {
            return Err(Error::Protocol(format!("server cannot consume {}", reply.kind())));
        };
        match slot.phase {
            Phase::AwaitingReply { round, step } if round == reply.round && step == reply.step => {}
            _ => {
                return Err(Error::Protocol(format!(
                    "stale or duplicate reply for user {} round {} step {}",
                    reply.user, reply.round, reply.step
                )))
            }
        }
        if slot.last_up.is_some_and(|last| reply.seq <= last) {
            return Err(Error::Protocol(format!("reply sequence {} is not increasing", reply.seq)));
        }
        let expected = slot.trainer.pair.discriminator.param_count();
        if gradient.len() != expected {
            return Err(Error::Protocol(format!("reply carries {} gradients for {expected} weights", gradient.len())));
        }
        Ok((gradient.clone(), *loss))
    }

    fn mark_done(&mut self, reply: &ProtocolMessage<T>) {
        let slot = &mut self.users[reply.user as usize];
        slot.last_up = Some(reply.seq);
        slot.phase = Phase::DiscriminatorDone;
    }

    /// Combines the client's real-term gradient with a fresh fake-term
    /// gradient and steps the discriminator once. Returns the fake loss.
    pub fn server_discriminator_step(&mut self, reply: &ProtocolMessage<T>) -> Result<T> {
        let (gradient, _) = self.accept(reply)?;
        let loss = self.users[reply.user as usize].trainer.discriminator_step(&gradient)?;
        self.mark_done(reply);
        Ok(loss)
    }

    /// As [`server_discriminator_step`](Self::server_discriminator_step) with
    /// a given fake batch instead of `G(z_t)`.
    pub fn server_discriminator_step_with_fake(&mut self, reply: &ProtocolMessage<T>, fake: &Tensor<T>) -> Result<T> {
        let (gradient, _) = self.accept(reply)?;
        let loss = self.users[reply.user as usize].trainer.discriminator_step_with_fake(&gradient, fake)?;
        self.mark_done(reply);
        Ok(loss)
    }

    /// One generator step against the freshly updated discriminator.
    pub fn server_generator_step(&mut self, user: u32) -> Result<T> {
        let slot = self.user_mut(user)?;
        if slot.phase != Phase::DiscriminatorDone {
            return Err(Error::Protocol(format!("user {user}: generator step before the discriminator step")));
        }
        let loss = slot.trainer.generator_step()?;
        slot.phase = Phase::Idle;
        slot.step += 1;
        Ok(loss)
    }

    /// Drops an in-flight step whose reply will not arrive. A discriminator
    /// step already taken is kept and the generator step still runs.
    pub fn abort_step(&mut self, user: u32) -> Result<()> {
        let slot = self.user_mut(user)?;
        if let Phase::AwaitingReply { .. } = slot.phase {
            slot.phase = Phase::Idle;
        }
        Ok(())
    }

    /// Generated samples at eval-mode batch norm from the user's evaluation stream.
    pub fn score_samples(&mut self, user: u32, n: usize) -> Result<Tensor<T>> {
        let slot = self.user_mut(user)?;
        let z = sample_latent(slot.trainer.pair.latent_dim, n, &mut slot.eval_latent);
        slot.trainer.pair.generator.predict(&z, BatchNormMode::Eval)
    }

    /// Records the round's IS and closes the round.
    pub fn complete_round(&mut self, user: u32, inception_score: f64) -> Result<ProtocolMessage<T>> {
        let steps = self.config.steps_per_round;
        let slot = self.user_mut(user)?;
        if slot.phase != Phase::Idle || slot.step != steps {
            return Err(Error::Protocol(format!("user {user} completed {} of {steps} steps", slot.step)));
        }
        slot.rounds += 1;
        slot.step = 0;
        slot.monitor.record(inception_score);
        let seq = slot.seq_down;
        slot.seq_down += 1;
        Ok(ProtocolMessage { user, round: slot.rounds, step: 0, seq, body: MessageBody::RoundComplete { inception_score } })
    }

    /// `n` samples from `G_u` in eval mode, from the `synthetic:u` stream.
    ///
    /// Repeated calls on the same state return identical samples.
    pub fn generate_synthetic_dataset(&self, user: u32, n: usize) -> Result<Tensor<T>> {
        if n == 0 {
            return Err(Error::Contract("synthetic dataset size must be positive".into()));
        }
        let slot = self.user(user)?;
        let mut rng = StreamRng::new(self.seed, &format!("synthetic:{user}"));
        let z = sample_latent(slot.trainer.pair.latent_dim, n, &mut rng);
        slot.trainer.pair.generator.clone().predict(&z, BatchNormMode::Eval)
    }

    /// SHA-256 over every user's weights, running statistics, optimizer
    /// state, counters and stream positions.
    pub fn state_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        for slot in &self.users {
            let t = &slot.trainer;
            for model in [&t.pair.generator, &t.pair.discriminator] {
                for p in model.tensors() {
                    p.data().iter().for_each(|v| v.write_le(&mut buf));
                }
                for s in model.running_stats() {
                    s.mean.iter().chain(&s.var).for_each(|v| v.write_le(&mut buf));
                }
            }
            for opt in [&t.opt_d, &t.opt_g] {
                buf.extend_from_slice(&opt.steps().to_le_bytes());
                let (m, v) = opt.moments();
                m.iter().chain(v).for_each(|x| x.write_le(&mut buf));
            }
            buf.extend_from_slice(&slot.rounds.to_le_bytes());
            buf.extend_from_slice(&slot.step.to_le_bytes());
            buf.extend_from_slice(&slot.seq_down.to_le_bytes());
            buf.extend_from_slice(&t.latent_rng().word_pos().to_le_bytes());
            buf.extend_from_slice(&slot.eval_latent.word_pos().to_le_bytes());
            slot.monitor.history().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
            h.update(&buf);
            buf.clear();
        }
        h.finalize().into()
    }

    pub fn state_hash_hex(&self) -> String {
        self.state_hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}
