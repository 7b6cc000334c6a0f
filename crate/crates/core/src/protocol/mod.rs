//! Server and client actors of the split training protocol.
//!
//! Per step, the server sends `D_u`'s weights down; the client answers with
//! the gradient of the real-data loss on one private batch; the server adds
//! the fake-data gradient, takes one discriminator step, then one generator
//! step. Rounds group `T` steps and end with an IS evaluation.

mod client;
mod message;
mod monitor;
mod round;
mod server;
mod trainer;

pub use client::{ClientCounters, ClientState};
pub use message::{MessageBody, ProtocolMessage};
pub use monitor::{plateaued, ConvergenceMonitor, StopReason};
pub use round::{run_round, run_until_converged, Federation, RoundReport, Scorer, UserOutcome, UserRound};
pub use server::{server_init, ProtocolConfig, ServerState, UserSlot};
pub use trainer::GanTrainer;
