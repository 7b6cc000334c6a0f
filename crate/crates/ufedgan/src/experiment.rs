//! Experiment orchestration: dataset → partition → protocol run with taps →
//! synthetic data → attack replay → metrics and reports.

use std::path::{Path, PathBuf};

use serde::Serialize;
use ufedgan_core::attacker::{run_attack, AttackMode, AttackerState};
use ufedgan_core::data::{dirichlet_partition, downscale, glyph_dataset, LabeledDataset, PartitionPlan, PARTITION_STREAM};
use ufedgan_core::metrics::{
    linear_evaluation, mean_best_match_ssim, moment_distance, train_probe_classifier, GaussianMoments, MetricReport,
    ProbeClassifier, Role, CSV_HEADER, MIN_MOMENT_SAMPLES,
};
use ufedgan_core::nn::{sample_latent, GanSpec, Model};
use ufedgan_core::protocol::{run_until_converged, server_init, ClientState, Federation, StopReason, UserOutcome};
use ufedgan_core::rng::{
    attacker_init_stream, attacker_latent_stream, client_batch_stream, latent_stream, server_init_stream, stream_id,
    StreamRng,
};
use ufedgan_core::tensor::BatchNormMode;
use ufedgan_core::transport::{read_header, EavesdropTap, TapFilter, Transcript};
use ufedgan_core::Tensor;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::{in_file, read, write, CliError, Result};
use crate::idx::load_idx_images;
use crate::pnm::image_grid;
use crate::table::{csv_vectors, load_csv_vectors};

/// Stream that draws toy and glyph datasets.
pub const DATASET_STREAM: &str = "dataset";
/// Stream of the real/test split used by `evaluate`.
pub const EVALUATION_SPLIT_STREAM: &str = "evaluation-split";
/// Latent stream used when `evaluate` samples a generator checkpoint.
pub const EVALUATION_LATENT_STREAM: &str = "evaluation-latent";
const GRID_SAMPLES: usize = 64;
const GRID_COLUMNS: usize = 8;

pub fn load_dataset(config: &ExperimentConfig) -> Result<LabeledDataset<f32>> {
    let seed = config.experiment.seed;
    match &config.dataset {
        DatasetSource::Toy { samples, distribution } => {
            Ok(distribution.sample_labeled(*samples, &mut StreamRng::new(seed, DATASET_STREAM))?)
        }
        DatasetSource::Glyphs { samples } => Ok(glyph_dataset(*samples, &mut StreamRng::new(seed, DATASET_STREAM))?),
        DatasetSource::Idx { images, labels, resize } => {
            let ds = load_idx_images(images, labels)?;
            match resize {
                Some([h, w]) => {
                    Ok(LabeledDataset::new(downscale(ds.samples(), *h, *w)?, ds.labels().to_vec(), ds.classes())?)
                }
                None => Ok(ds),
            }
        }
        DatasetSource::Csv { path } => load_csv_vectors(path),
    }
}

/// Model pair for the configured profile, checked against the data shape.
pub fn gan_spec(config: &ExperimentConfig, dataset: &LabeledDataset<f32>) -> Result<GanSpec> {
    let shape = dataset.sample_shape();
    let channels = if shape.len() == 3 { shape[0] } else { 1 };
    let profile = config.model.profile;
    let expected = profile.data_shape(channels);
    if expected != shape {
        return Err(CliError::Config(format!(
            "profile {} generates samples of shape {expected:?} but the dataset holds {shape:?}",
            profile.name()
        )));
    }
    Ok(GanSpec::for_profile(profile, channels)?)
}

/// Names and ids of every random stream an experiment opens.
pub fn stream_log(config: &ExperimentConfig) -> String {
    let mut names: Vec<String> =
        [DATASET_STREAM, PARTITION_STREAM, "probe-split", "probe-init", "probe-batches", EVALUATION_SPLIT_STREAM, EVALUATION_LATENT_STREAM]
            .map(String::from)
            .to_vec();
    for u in 0..config.partition.users as u32 {
        names.extend([server_init_stream(u), client_batch_stream(u), latent_stream(u), format!("eval-latent:{u}"), format!("synthetic:{u}")]);
    }
    let mut out = format!("# name, 64-bit ChaCha8 stream id\nseed {}\n", config.experiment.seed);
    for name in &names {
        out.push_str(&format!("{name} {:016x}\n", stream_id(name)));
    }
    out.push_str(&format!("attacker seed {}\n", config.attacker_seed()));
    for u in 0..config.partition.users as u32 {
        for name in [attacker_init_stream(u), attacker_latent_stream(u), format!("synthetic:{u}")] {
            out.push_str(&format!("{name} {:016x}\n", stream_id(&name)));
        }
    }
    out
}

pub fn version_stamp() -> String {
    format!(
        "ufedgan {}\nwire-format {}\ntranscript-format {}\ncheckpoint-format {}\n",
        env!("CARGO_PKG_VERSION"),
        ufedgan_core::transport::WIRE_VERSION,
        ufedgan_core::transport::TRANSCRIPT_VERSION,
        crate::checkpoint::CHECKPOINT_VERSION
    )
}

/// Writes the effective config, the stream log and the version stamp.
pub fn stamp_output(config: &ExperimentConfig) -> Result<()> {
    let dir = &config.experiment.out_dir;
    write(&dir.join("config.toml"), config.to_toml())?;
    write(&dir.join("rng_streams.txt"), stream_log(config))?;
    write(&dir.join("VERSION"), version_stamp())
}

pub fn save_transcript(path: &Path, transcript: &Transcript) -> Result<()> {
    write(path, transcript.to_bytes())
}

pub fn load_transcript(path: &Path) -> Result<Transcript> {
    Transcript::from_bytes(&read(path)?).map_err(in_file(path))
}

/// Everything derived from the config before training starts.
pub struct Setup {
    pub dataset: LabeledDataset<f32>,
    pub plan: PartitionPlan,
    pub spec: GanSpec,
    pub probe: ProbeClassifier,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let dataset = load_dataset(config)?;
        let spec = gan_spec(config, &dataset)?;
        let plan = partition_dataset(config, &dataset)?;
        let probe = train_probe_classifier(&dataset, &config.probe, config.experiment.seed)?;
        Ok(Setup { dataset, plan, spec, probe })
    }

    /// The user's local samples, the reference for its metrics.
    pub fn local(&self, user: u32) -> Result<LabeledDataset<f32>> {
        Ok(self.dataset.subset(&self.plan.user_indices(user as usize))?)
    }
}

fn partition_dataset(config: &ExperimentConfig, dataset: &LabeledDataset<f32>) -> Result<PartitionPlan> {
    Ok(dirichlet_partition(
        dataset.labels(),
        dataset.classes(),
        config.partition.users,
        config.partition.beta,
        config.experiment.seed,
    )?)
}

#[derive(Serialize)]
struct PartitionFile<'a> {
    users: usize,
    beta: f64,
    seed: u64,
    samples: usize,
    classes: usize,
    /// `counts[u][c]`: samples of class `c` held by user `u`.
    counts: &'a [Vec<usize>],
    user: Vec<PartitionUser>,
}

#[derive(Serialize)]
struct PartitionUser {
    id: usize,
    indices: Vec<usize>,
}

pub struct PartitionOutcome {
    pub plan: PartitionPlan,
    /// `counts[u][c]`.
    pub counts: Vec<Vec<usize>>,
    pub table: String,
}

/// Partitions the dataset and writes `partition.toml` plus the stamps.
pub fn partition(config: &ExperimentConfig) -> Result<PartitionOutcome> {
    let dataset = load_dataset(config)?;
    let plan = partition_dataset(config, &dataset)?;
    let by_class = plan.counts(dataset.labels());
    let users = config.partition.users;
    let counts: Vec<Vec<usize>> = (0..users).map(|u| by_class.iter().map(|row| row[u]).collect()).collect();
    let total: usize = counts.iter().flatten().sum();
    if total != dataset.len() {
        return Err(ufedgan_core::Error::Data(format!("partition assigned {total} of {} samples", dataset.len())).into());
    }
    let mut table = format!("# users {users}, beta {}, seed {}\nuser", config.partition.beta, config.experiment.seed);
    for c in 0..dataset.classes() {
        table.push_str(&format!("\tc{c}"));
    }
    table.push_str("\ttotal\n");
    for (u, row) in counts.iter().enumerate() {
        table.push_str(&u.to_string());
        for v in row {
            table.push_str(&format!("\t{v}"));
        }
        table.push_str(&format!("\t{}\n", row.iter().sum::<usize>()));
    }
    table.push_str(&format!("conservation: {total} assigned of {} samples, ok\n", dataset.len()));
    let file = PartitionFile {
        users,
        beta: config.partition.beta,
        seed: config.experiment.seed,
        samples: dataset.len(),
        classes: dataset.classes(),
        counts: &counts,
        user: (0..users).map(|id| PartitionUser { id, indices: plan.user_indices(id) }).collect(),
    };
    stamp_output(config)?;
    let text = toml::to_string(&file).map_err(|e| CliError::Config(e.to_string()))?;
    write(&config.experiment.out_dir.join("partition.toml"), text)?;
    Ok(PartitionOutcome { plan, counts, table })
}

/// Scores generated samples against one user's local data.
pub fn score_generator(
    config: &ExperimentConfig,
    probe: &ProbeClassifier,
    samples: &Tensor<f32>,
    local: &Tensor<f32>,
    report: &mut MetricReport,
) -> Result<()> {
    report.is = Some(probe.inception_score(samples, config.protocol.is_splits)?);
    let reference: GaussianMoments = probe.moments(local)?;
    report.fid = Some(probe.fid(&reference, samples)?.value);
    if samples.shape().len() == 4 {
        let take = |t: &Tensor<f32>, n: usize| t.select_rows(&(0..n.min(t.rows())).collect::<Vec<_>>());
        let generated = take(samples, config.evaluation.ssim_samples)?;
        let real = take(local, config.evaluation.ssim_reference)?;
        report.ssim = Some(mean_best_match_ssim(&generated, &real, 2.0)?);
    } else if samples.rows() >= MIN_MOMENT_SAMPLES && local.rows() >= MIN_MOMENT_SAMPLES {
        let gap = moment_distance(samples, local)?;
        report.mean_gap = Some(gap.max_mean_gap());
        report.std_gap = Some(gap.max_std_gap());
    }
    report.validate()?;
    Ok(())
}

fn write_samples(dir: &Path, stem: &str, probe: &ProbeClassifier, samples: &Tensor<f32>) -> Result<()> {
    let labels = probe.predict_labels(samples)?;
    write(&dir.join("synthetic").join(format!("{stem}.csv")), csv_vectors(samples, &labels))?;
    if samples.shape().len() == 4 {
        let grid = samples.select_rows(&(0..GRID_SAMPLES.min(samples.rows())).collect::<Vec<_>>())?;
        write(&dir.join("grids").join(format!("{stem}.pgm")), image_grid(&grid, GRID_COLUMNS)?)?;
    }
    Ok(())
}

fn csv(rows: &[MetricReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Plateau => "plateau",
        StopReason::RoundCap => "round-cap",
    }
}

pub struct RunOutcome {
    pub outcomes: Vec<UserOutcome>,
    /// One IS row per user per round.
    pub rounds: Vec<MetricReport>,
    /// Final server rows, then attacker rows when the attacker is enabled.
    pub summary: Vec<MetricReport>,
    pub transcript: Transcript,
    pub state_hash: String,
    pub out_dir: PathBuf,
}

/// Trains every user's GAN, records the uplink, and writes all artifacts.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let setup = Setup::new(config)?;
    let seed = config.experiment.seed;
    let id = &config.experiment.id;
    let out = &config.experiment.out_dir;
    stamp_output(config)?;

    let users = config.partition.users;
    let filter = match config.attacker.mode {
        AttackMode::UplinkOnly => TapFilter::Uplink,
        AttackMode::WithDownlink => TapFilter::Both,
    };
    let tap = EavesdropTap::new(filter);
    let server = server_init::<f32>(users, &setup.spec, &config.protocol, seed)?;
    let clients = (0..users as u32)
        .map(|u| {
            let view = setup.dataset.unlabeled_view(&setup.plan.user_indices(u as usize))?;
            ClientState::new(u, view, setup.spec.discriminator.clone(), config.protocol.batch_size, seed)
        })
        .collect::<ufedgan_core::Result<Vec<_>>>()?;
    let mut fed = Federation::new(server, clients, &[tap.clone()])?;

    let mut rounds = Vec::new();
    let outcomes = run_until_converged(&mut fed, &setup.probe, |report| {
        for r in &report.users {
            let mut row = MetricReport::new(id, r.round, r.user, Role::Server);
            row.is = Some(r.inception_score);
            rounds.push(row);
        }
        Ok(())
    })?;
    let transcript = Transcript::new(seed, tap.frames());
    save_transcript(&out.join("transcript.ufgt"), &transcript)?;

    let mut summary = Vec::new();
    let mut stops = String::from("user,rounds,stop\n");
    for o in &outcomes {
        let u = o.user;
        stops.push_str(&format!("{u},{},{}\n", o.rounds, stop_name(o.stop)));
        let slot = fed.server.user(u)?;
        let pair = &slot.trainer.pair;
        save_checkpoint(&out.join("checkpoints").join(format!("user{u}-generator.ufgc")), &pair.generator)?;
        save_checkpoint(&out.join("checkpoints").join(format!("user{u}-discriminator.ufgc")), &pair.discriminator)?;
        let samples = fed.server.generate_synthetic_dataset(u, config.evaluation.synthetic_samples)?;
        write_samples(out, &format!("user{u}"), &setup.probe, &samples)?;
        let mut row = MetricReport::new(id, o.rounds, u, Role::Server);
        score_generator(config, &setup.probe, &samples, setup.local(u)?.samples(), &mut row)?;
        summary.push(row);
    }
    if config.attacker.enabled {
        summary.extend(attack_transcript(config, &setup, &transcript)?);
    }

    let state_hash = fed.server.state_hash_hex();
    write(&out.join("metrics.csv"), csv(&rounds))?;
    write(&out.join("summary.csv"), csv(&summary))?;
    write(&out.join("stops.csv"), stops)?;
    write(&out.join("final_state.txt"), format!("server {state_hash}\nprobe {}\n", setup.probe.hash_hex()))?;
    Ok(RunOutcome { outcomes, rounds, summary, transcript, state_hash, out_dir: out.clone() })
}

/// Replays `transcript` against every configured user and scores the
/// attacker's generators. Writes synthetic CSVs and grids under `attacker-`.
pub fn attack_transcript(config: &ExperimentConfig, setup: &Setup, transcript: &Transcript) -> Result<Vec<MetricReport>> {
    let out = &config.experiment.out_dir;
    let mut rows = Vec::new();
    for u in 0..config.partition.users as u32 {
        let mut attacker = AttackerState::<f32>::new(
            &setup.spec,
            u,
            config.protocol.optimizer,
            config.protocol.batch_size,
            config.attacker_seed(),
        )?;
        run_attack(transcript, &mut attacker, config.attacker.mode)?;
        let mut last_round = 0;
        for (index, frame) in transcript.frames.iter().enumerate() {
            let h = read_header(frame).map_err(|e| ufedgan_core::Error::Transcript { index, reason: e.to_string() })?;
            if h.user == u && h.is_uplink() {
                last_round = last_round.max(h.round);
            }
        }
        let mut rng = StreamRng::new(config.attacker_seed(), &format!("synthetic:{u}"));
        let pair = &attacker.trainer.pair;
        let z = sample_latent(pair.latent_dim, config.evaluation.synthetic_samples, &mut rng);
        let samples = pair.generator.clone().predict(&z, BatchNormMode::Eval)?;
        write_samples(out, &format!("attacker-user{u}"), &setup.probe, &samples)?;
        let mut row = MetricReport::new(&config.experiment.id, last_round, u, Role::Attacker);
        score_generator(config, &setup.probe, &samples, setup.local(u)?.samples(), &mut row)?;
        rows.push(row);
    }
    Ok(rows)
}

/// The `attack` subcommand: replays a transcript file offline.
pub fn attack(config: &ExperimentConfig) -> Result<Vec<MetricReport>> {
    let transcript = load_transcript(&config.transcript_path())?;
    let setup = Setup::new(config)?;
    stamp_output(config)?;
    let rows = attack_transcript(config, &setup, &transcript)?;
    write(&config.experiment.out_dir.join("attack_metrics.csv"), csv(&rows))?;
    Ok(rows)
}

pub const EVALUATION_HEADER: &str = "experiment_id,source,train_samples,test_samples,classes,accuracy,is,fid";

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub source: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub classes: usize,
    /// Held-out accuracy on real data of a linear classifier fitted to the synthetic set.
    pub accuracy: f64,
    pub inception_score: f64,
    pub fid: f64,
}

/// The `evaluate` subcommand: linear evaluation of a synthetic set (or a
/// generator checkpoint labeled by the probe) against held-out real data.
pub fn evaluate(config: &ExperimentConfig) -> Result<Evaluation> {
    let dataset = load_dataset(config)?;
    let probe = train_probe_classifier(&dataset, &config.probe, config.experiment.seed)?;
    let (samples, labels, source) = match (&config.evaluation.synthetic, &config.evaluation.checkpoint) {
        (None, Some(path)) => {
            let mut generator: Model<f32> = load_checkpoint(path)?;
            let latent = generator.spec().input_shape.iter().product();
            let mut rng = StreamRng::new(config.experiment.seed, EVALUATION_LATENT_STREAM);
            let z = sample_latent(latent, config.evaluation.synthetic_samples, &mut rng);
            let samples = generator.predict(&z, BatchNormMode::Eval)?;
            let labels = probe.predict_labels(&samples)?;
            (samples, labels, path.clone())
        }
        (synthetic, _) => {
            let path = synthetic.clone().unwrap_or_else(|| config.experiment.out_dir.join("synthetic").join("user0.csv"));
            let set = load_csv_vectors(&path)?;
            let mut shape = vec![set.len()];
            shape.extend_from_slice(dataset.sample_shape());
            let samples = set
                .samples()
                .clone()
                .reshape(shape)
                .map_err(|_| CliError::parse(&path, 0, format!("rows of {} values do not fit samples of shape {:?}", set.samples().row_len(), dataset.sample_shape())))?;
            (samples, set.labels().to_vec(), path)
        }
    };
    if let Some(&bad) = labels.iter().find(|&&l| l >= dataset.classes()) {
        return Err(ufedgan_core::Error::Data(format!("synthetic label {bad} outside the dataset's {} classes", dataset.classes())).into());
    }
    let (_, test) = dataset.split(config.evaluation.test_fraction, &mut StreamRng::new(config.experiment.seed, EVALUATION_SPLIT_STREAM))?;
    let accuracy = linear_evaluation(&samples, &labels, test.samples(), test.labels(), dataset.classes())?;
    let inception_score = probe.inception_score(&samples, config.protocol.is_splits)?;
    let fid = probe.fid(&probe.moments(dataset.samples())?, &samples)?.value;
    let eval = Evaluation {
        source: source.display().to_string(),
        train_samples: samples.rows(),
        test_samples: test.len(),
        classes: dataset.classes(),
        accuracy,
        inception_score,
        fid,
    };
    stamp_output(config)?;
    let row = format!(
        "{EVALUATION_HEADER}\n{},{},{},{},{},{},{},{}\n",
        config.experiment.id,
        eval.source.replace(',', "_"),
        eval.train_samples,
        eval.test_samples,
        eval.classes,
        eval.accuracy,
        eval.inception_score,
        eval.fid
    );
    write(&config.experiment.out_dir.join("evaluation.csv"), row)?;
    Ok(eval)
}
