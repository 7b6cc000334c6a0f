use alloc::format;
use alloc::vec::Vec;

use super::client::ClientState;
use super::message::{MessageBody, ProtocolMessage};
use super::monitor::StopReason;
use super::server::ServerState;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::transport::{in_process_link, ClientEndpoint, EavesdropTap, Endpoint, ServerEndpoint};

/// Scores a set of generated samples; the convergence monitor consumes it.
pub trait Scorer<T> {
    fn inception_score(&self, samples: &Tensor<T>, splits: usize) -> Result<f64>;
}

impl<T, F: Fn(&Tensor<T>, usize) -> Result<f64>> Scorer<T> for F {
    fn inception_score(&self, samples: &Tensor<T>, splits: usize) -> Result<f64> {
        self(samples, splits)
    }
}

/// Server, clients and the links between them.
pub struct Federation<T> {
    pub server: ServerState<T>,
    pub clients: Vec<ClientState<T>>,
    server_ends: Vec<ServerEndpoint>,
    client_ends: Vec<ClientEndpoint>,
}

impl<T: Scalar> Federation<T> {
    /// Links client `u` to the server; every link reports to all `taps`.
    pub fn new(server: ServerState<T>, clients: Vec<ClientState<T>>, taps: &[EavesdropTap]) -> Result<Self> {
        if clients.len() != server.num_users() {
            return Err(Error::Config(format!("{} clients for {} server users", clients.len(), server.num_users())));
        }
        if let Some((u, c)) = clients.iter().enumerate().find(|(u, c)| c.user() as usize != *u) {
            return Err(Error::Config(format!("client {} registered in slot {u}", c.user())));
        }
        let (server_ends, client_ends) = (0..clients.len()).map(|_| in_process_link(taps)).unzip();
        Ok(Federation { server, clients, server_ends, client_ends })
    }

    /// One protocol step for `user`: weights down, gradient up, D step, G step.
    /// Returns `(real loss, fake loss, generator loss)`.
    pub fn protocol_step(&mut self, user: u32) -> Result<(f64, f64, f64)> {
        let u = user as usize;
        let result = self.exchange(u);
        let reply = match result {
            Ok(r) => r,
            Err(e) => {
                self.server.abort_step(user)?;
                return Err(e);
            }
        };
        let MessageBody::ClientUpdateUp { loss, .. } = reply.body else {
            self.server.abort_step(user)?;
            return Err(Error::Protocol(format!("expected ClientUpdateUp, got {}", reply.kind())));
        };
        let fake = self.server.server_discriminator_step(&reply)?;
        let gen = self.server.server_generator_step(user)?;
        Ok((loss, fake.as_f64(), gen.as_f64()))
    }

    fn exchange(&mut self, u: usize) -> Result<ProtocolMessage<T>> {
        let down = self.server.discriminator_down(u as u32)?;
        self.server_ends[u].send(&down)?;
        self.client_turn(u)?;
        self.server_ends[u]
            .recv()?
            .ok_or_else(|| Error::Link(format!("no reply from client {u}")))
    }

    /// Lets client `u` answer everything queued for it.
    fn client_turn(&mut self, u: usize) -> Result<()> {
        while let Some(msg) = self.client_ends[u].recv::<T>()? {
            if let MessageBody::DiscriminatorDown { .. } = msg.body {
                let reply = self.clients[u].client_step(&msg)?;
                self.client_ends[u].send(&reply)?;
            }
        }
        Ok(())
    }

    pub fn server_endpoint(&mut self, user: u32) -> &mut ServerEndpoint {
        &mut self.server_ends[user as usize]
    }

    pub fn client_endpoint(&mut self, user: u32) -> &mut ClientEndpoint {
        &mut self.client_ends[user as usize]
    }
}

/// Per-user outcome of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRound {
    pub user: u32,
    pub round: u32,
    pub inception_score: f64,
    /// Means over the round's steps.
    pub real_loss: f64,
    pub fake_loss: f64,
    pub generator_loss: f64,
    pub stop: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundReport {
    pub users: Vec<UserRound>,
}

/// Runs `T` steps for every user whose monitor has not stopped, then scores
/// each generator and closes the round.
pub fn run_round<T: Scalar>(fed: &mut Federation<T>, scorer: &dyn Scorer<T>) -> Result<RoundReport> {
    let steps = fed.server.config().steps_per_round;
    let (is_samples, splits) = (fed.server.config().is_samples, fed.server.config().is_splits);
    let mut report = RoundReport::default();
    for user in 0..fed.server.num_users() as u32 {
        if fed.server.user(user)?.stop_reason().is_some() {
            continue;
        }
        let (mut real, mut fake, mut gen) = (0.0, 0.0, 0.0);
        for _ in fed.server.user(user)?.step_in_round()..steps {
            let (r, f, g) = fed.protocol_step(user)?;
            real += r;
            fake += f;
            gen += g;
        }
        let samples = fed.server.score_samples(user, is_samples)?;
        let is = scorer.inception_score(&samples, splits)?;
        let done = fed.server.complete_round(user, is)?;
        fed.server_ends[user as usize].send(&done)?;
        fed.client_turn(user as usize)?;
        let slot = fed.server.user(user)?;
        let n = steps as f64;
        report.users.push(UserRound {
            user,
            round: slot.rounds(),
            inception_score: is,
            real_loss: real / n,
            fake_loss: fake / n,
            generator_loss: gen / n,
            stop: slot.stop_reason(),
        });
    }
    Ok(report)
}

/// Final state of one user's training.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub user: u32,
    pub rounds: u32,
    pub stop: StopReason,
    pub history: Vec<f64>,
}

/// Repeats [`run_round`] until every user has plateaued or hit the cap.
/// `on_round` sees each report as it is produced.
pub fn run_until_converged<T: Scalar>(
    fed: &mut Federation<T>,
    scorer: &dyn Scorer<T>,
    mut on_round: impl FnMut(&RoundReport) -> Result<()>,
) -> Result<Vec<UserOutcome>> {
    loop {
        let active = (0..fed.server.num_users() as u32)
            .filter(|&u| fed.server.user(u).map(|s| s.stop_reason().is_none()).unwrap_or(false))
            .count();
        if active == 0 {
            break;
        }
        let report = run_round(fed, scorer)?;
        on_round(&report)?;
    }
    (0..fed.server.num_users() as u32)
        .map(|u| {
            let slot = fed.server.user(u)?;
            Ok(UserOutcome {
                user: u,
                rounds: slot.rounds(),
                stop: slot.stop_reason().expect("loop exits only when every user stopped"),
                history: slot.monitor.history().to_vec(),
            })
        })
        .collect()
}
