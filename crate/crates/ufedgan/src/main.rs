use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ufedgan::experiment::{self, EVALUATION_HEADER};
use ufedgan::{CliError, ExperimentConfig, Overrides};
use ufedgan_core::metrics::CSV_HEADER;

#[derive(Parser)]
#[command(name = "ufedgan", version, about = "Split federated GAN training, eavesdropping attacker and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the dataset across users and write partition.toml.
    Partition(Common),
    /// Train every user's GAN and write transcripts, metrics, checkpoints and synthetic data.
    Run(Common),
    /// Replay a transcript with the eavesdropping attacker and score its generators.
    Attack(Common),
    /// Linear evaluation of a synthetic set or generator checkpoint on held-out real data.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Round cap, overriding protocol.max_rounds.
    #[arg(long)]
    rounds: Option<u32>,
    /// Output directory, overriding experiment.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        config.apply(&Overrides { seed: self.seed, rounds: self.rounds, out: self.out.clone() })?;
        Ok(config)
    }
}

fn rows(rows: &[ufedgan_core::metrics::MetricReport]) {
    println!("{CSV_HEADER}");
    for r in rows {
        println!("{}", r.to_csv_row());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Partition(c) => {
            let config = c.config()?;
            let outcome = experiment::partition(&config)?;
            print!("{}", outcome.table);
        }
        Command::Run(c) => {
            let config = c.config()?;
            let outcome = experiment::run(&config)?;
            for o in &outcome.outcomes {
                println!("user {} stopped after {} rounds ({:?})", o.user, o.rounds, o.stop);
            }
            rows(&outcome.summary);
            println!("state {}", outcome.state_hash);
            println!("outputs in {}", outcome.out_dir.display());
        }
        Command::Attack(c) => {
            let config = c.config()?;
            rows(&experiment::attack(&config)?);
        }
        Command::Evaluate(c) => {
            let config = c.config()?;
            let e = experiment::evaluate(&config)?;
            println!("{EVALUATION_HEADER}");
            println!(
                "{},{},{},{},{},{},{},{}",
                config.experiment.id, e.source, e.train_samples, e.test_samples, e.classes, e.accuracy, e.inception_score, e.fid
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
