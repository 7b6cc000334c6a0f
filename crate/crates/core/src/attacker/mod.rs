//! Eavesdropping reconstruction attacker.
//!
//! The attacker knows the GAN architecture and sees the uplink: per step,
//! the client's real-data gradient and loss. It trains its own shadow pair
//! `(G_A, D_A)` by substituting those gradients for the real term of its own
//! discriminator update, exactly as the server does with its pair.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GanSpec, OptimizerKind};
use crate::params::ParameterVector;
use crate::protocol::{GanTrainer, MessageBody};
use crate::rng::{attacker_init_stream, attacker_latent_stream, StreamRng};
use crate::tensor::Scalar;
use crate::transport::{decode, Transcript};

/// What the attacker does with intercepted downlink weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Only uplink gradients are used.
    UplinkOnly,
    /// Downlink discriminator weights overwrite `D_A` before each step.
    WithDownlink,
}

/// One captured client update.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptedUpdate<T> {
    pub round: u32,
    pub step: u32,
    pub gradient: ParameterVector<T>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct AttackerState<T> {
    pub trainer: GanTrainer<T>,
    user: u32,
    cursor: Option<(u32, u32)>,
    consumed: usize,
}

impl<T: Scalar> AttackerState<T> {
    /// Shadow models from the `attacker-init:u` stream of the attacker's own seed.
    pub fn new(spec: &GanSpec, user: u32, optimizer: OptimizerKind, batch_size: usize, seed: u64) -> Result<Self> {
        let pair = spec.init(&mut StreamRng::new(seed, &attacker_init_stream(user)))?;
        let latent = StreamRng::new(seed, &attacker_latent_stream(user));
        Ok(AttackerState { trainer: GanTrainer::new(pair, optimizer, latent, batch_size), user, cursor: None, consumed: 0 })
    }

    pub fn user(&self) -> u32 {
        self.user
    }

    /// Updates consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Mirrors one server step: `D_A` steps on the intercepted real-term
    /// gradient plus its own fake-term gradient, then `G_A` steps on `D_A`.
    pub fn attack_step(&mut self, update: &InterceptedUpdate<T>) -> Result<()> {
        let key = (update.round, update.step);
        if self.cursor.is_some_and(|c| key <= c) {
            return Err(Error::Replay(format!(
                "update for round {} step {} after round {} step {}",
                key.0,
                key.1,
                self.cursor.unwrap().0,
                self.cursor.unwrap().1
            )));
        }
        self.trainer.discriminator_step(&update.gradient)?;
        self.trainer.generator_step()?;
        self.cursor = Some(key);
        self.consumed += 1;
        Ok(())
    }
}

/// Replays every update of `user` found in `transcript`.
///
/// Frames of other users are skipped. Decode failures abort with the frame
/// index; updates already applied stay applied.
pub fn run_attack<T: Scalar>(transcript: &Transcript, attacker: &mut AttackerState<T>, mode: AttackMode) -> Result<()> {
    for (index, frame) in transcript.frames.iter().enumerate() {
        let msg = decode::<T>(frame).map_err(|e| Error::Transcript { index, reason: format!("{e}") })?;
        if msg.user != attacker.user {
            continue;
        }
        match msg.body {
            MessageBody::ClientUpdateUp { gradient, loss } => {
                let update = InterceptedUpdate { round: msg.round, step: msg.step, gradient, loss };
                attacker.attack_step(&update)?;
            }
            MessageBody::DiscriminatorDown { weights } if mode == AttackMode::WithDownlink => {
                attacker.trainer.pair.discriminator.load(&weights).map_err(|e| Error::Structural(format!("{e}")))?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Users that appear in a transcript, ascending.
pub fn transcript_users(transcript: &Transcript) -> Result<Vec<u32>> {
    let mut users = Vec::new();
    for (index, frame) in transcript.frames.iter().enumerate() {
        let h = crate::transport::read_header(frame).map_err(|e| Error::Transcript { index, reason: format!("{e}") })?;
        if !users.contains(&h.user) {
            users.push(h.user);
        }
    }
    users.sort_unstable();
    Ok(users)
}
