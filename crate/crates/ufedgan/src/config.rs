//! Experiment configuration, read from TOML.
//!
//! Every table and field has a default, so an empty file is a valid config
//! (one user, gaussian1d). The runner writes the effective config, defaults
//! included, into each output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ufedgan_core::attacker::AttackMode;
use ufedgan_core::data::ToyDistribution;
use ufedgan_core::metrics::ProbeConfig;
use ufedgan_core::nn::Profile;
use ufedgan_core::protocol::ProtocolConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dataset: DatasetSource,
    pub partition: PartitionSection,
    pub model: ModelSection,
    pub protocol: ProtocolConfig,
    pub attacker: AttackerSection,
    pub probe: ProbeConfig,
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// First column of every metric row.
    pub id: String,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Where samples come from. Paths are relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Labeled draws from a toy distribution.
    Toy { samples: usize, distribution: ToyDistribution },
    /// Built-in 16×16 stencil digits.
    Glyphs { samples: usize },
    /// IDX image and label files, optionally area-resampled to `resize`.
    Idx { images: PathBuf, labels: PathBuf, resize: Option<[usize; 2]> },
    /// CSV with header `label,f0,...`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub users: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerSection {
    /// Replay the captured uplink at the end of `run`.
    pub enabled: bool,
    /// Seed of the shadow models; the experiment seed when absent.
    pub seed: Option<u64>,
    pub mode: AttackMode,
    /// Transcript read by `attack`; `<out_dir>/transcript.ufgt` when absent.
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Synthetic samples drawn per user at the end of `run`.
    pub synthetic_samples: usize,
    /// Generated samples entering the best-match SSIM.
    pub ssim_samples: usize,
    /// Local samples the SSIM matches against.
    pub ssim_reference: usize,
    /// Real samples held out as the linear-evaluation test set.
    pub test_fraction: f64,
    /// Synthetic CSV read by `evaluate`.
    pub synthetic: Option<PathBuf>,
    /// Generator checkpoint read by `evaluate` when no synthetic CSV is given.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            dataset: DatasetSource::default(),
            partition: PartitionSection::default(),
            model: ModelSection::default(),
            protocol: ProtocolConfig::default(),
            attacker: AttackerSection::default(),
            probe: ProbeConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { id: "experiment".into(), seed: 0, out_dir: PathBuf::from("out") }
    }
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Toy { samples: 4000, distribution: ToyDistribution::Gaussian1d { mean: 2.0, std: 0.5 } }
    }
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection { users: 1, beta: 0.5 }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { profile: Profile::Gaussian1d }
    }
}

impl Default for AttackerSection {
    fn default() -> Self {
        AttackerSection { enabled: false, seed: None, mode: AttackMode::UplinkOnly, transcript: None }
    }
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            synthetic_samples: 1000,
            ssim_samples: 100,
            ssim_reference: 500,
            test_fraction: 0.2,
            synthetic: None,
            checkpoint: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<u32>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are representable in TOML")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.experiment.seed = seed;
        }
        if let Some(rounds) = o.rounds {
            self.protocol.max_rounds = rounds;
        }
        if let Some(out) = &o.out {
            self.experiment.out_dir = out.clone();
        }
        self.validate()
    }

    pub fn attacker_seed(&self) -> u64 {
        self.attacker.seed.unwrap_or(self.experiment.seed)
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.attacker.transcript.clone().unwrap_or_else(|| self.experiment.out_dir.join("transcript.ufgt"))
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.partition.users == 0 {
            return Err(CliError::Config("partition.users must be at least 1".into()));
        }
        if !(self.partition.beta > 0.0 && self.partition.beta.is_finite()) {
            return Err(CliError::Config(format!("partition.beta must be positive, got {}", self.partition.beta)));
        }
        if self.experiment.id.contains([',', '\n', '"']) {
            return Err(CliError::Config("experiment.id may not contain commas, quotes or newlines".into()));
        }
        let ev = &self.evaluation;
        if ev.synthetic_samples < 2 * self.protocol.is_splits {
            return Err(CliError::Config(format!(
                "evaluation.synthetic_samples {} cannot fill {} IS splits",
                ev.synthetic_samples, self.protocol.is_splits
            )));
        }
        if ev.ssim_samples == 0 || ev.ssim_reference == 0 {
            return Err(CliError::Config("evaluation.ssim_samples and ssim_reference must be positive".into()));
        }
        if !(ev.test_fraction > 0.0 && ev.test_fraction < 1.0) {
            return Err(CliError::Config(format!("evaluation.test_fraction must lie in (0, 1), got {}", ev.test_fraction)));
        }
        match &self.dataset {
            DatasetSource::Toy { samples, distribution } => {
                distribution.validate().map_err(|e| CliError::Config(format!("dataset.distribution: {e}")))?;
                if *samples == 0 {
                    return Err(CliError::Config("dataset.samples must be positive".into()));
                }
            }
            DatasetSource::Glyphs { samples } if *samples == 0 => {
                return Err(CliError::Config("dataset.samples must be positive".into()));
            }
            DatasetSource::Idx { resize: Some([h, w]), .. } if *h == 0 || *w == 0 => {
                return Err(CliError::Config("dataset.resize dimensions must be positive".into()));
            }
            _ => {}
        }
        Ok(())
    }
}
