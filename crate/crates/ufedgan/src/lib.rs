//! File formats, experiment orchestration and the command-line front end
//! for split federated GAN training. The numerics live in `ufedgan-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod pnm;
pub mod table;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
