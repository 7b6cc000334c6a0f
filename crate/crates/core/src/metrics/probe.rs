use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::fid::{fid, Fid, GaussianMoments};
use super::score::inception_score;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{apply_gradient, gradient_vector, Activation, LayerSpec, Model, ModelSpec, OptimizerKind, OptimizerState, Params};
use crate::protocol::Scorer;
use crate::rng::StreamRng;
use crate::tensor::{BatchNormMode, Scalar, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    /// Minimum held-out accuracy for the probe to be usable.
    pub accuracy_floor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { hidden: [64, 32], epochs: 30, batch_size: 64, learning_rate: 1e-3, validation_fraction: 0.2, accuracy_floor: 0.8 }
    }
}

/// A small frozen classifier standing in for an Inception network.
#[derive(Debug, Clone)]
pub struct ProbeClassifier {
    model: Model<f64>,
    classes: usize,
    hash: [u8; 32],
    validation_accuracy: f64,
}

fn probe_spec(sample_shape: &[usize], hidden: [usize; 2], classes: usize) -> Result<ModelSpec> {
    let d: usize = sample_shape.iter().product();
    let leaky = Activation::LeakyRelu { slope: 0.2 };
    let mut layers = Vec::new();
    if sample_shape.len() > 1 {
        layers.push(LayerSpec::reshape(&[d]));
    }
    layers.push(LayerSpec::linear(d, hidden[0], leaky));
    layers.push(LayerSpec::linear(hidden[0], hidden[1], leaky));
    layers.push(LayerSpec::linear(hidden[1], classes, Activation::Identity));
    ModelSpec::new("probe", sample_shape, layers)
}

fn hash_model(model: &Model<f64>, classes: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((classes as u64).to_le_bytes());
    for shape in model.spec().param_shapes() {
        for d in shape {
            h.update((d as u64).to_le_bytes());
        }
    }
    for v in model.flatten().iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| libm::exp(v - m)).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    out
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, v)| if *v > row[best] { i } else { best })
}

/// Trains the probe on `dataset`, holding out a validation split, and
/// fails with a training error when the held-out accuracy misses the floor.
pub fn train_probe_classifier<T: Scalar>(dataset: &LabeledDataset<T>, config: &ProbeConfig, seed: u64) -> Result<ProbeClassifier> {
    let classes = dataset.classes();
    let spec = probe_spec(dataset.sample_shape(), config.hidden, classes)?;
    let wide = LabeledDataset::new(dataset.samples().cast::<f64>(), dataset.labels().to_vec(), classes)?;
    let (train, valid) = wide.split(config.validation_fraction, &mut StreamRng::new(seed, "probe-split"))?;
    let mut model = Model::<f64>::init(spec, &mut StreamRng::new(seed, "probe-init"))?;
    let mut opt = OptimizerState::new(OptimizerKind::adam(config.learning_rate), model.param_count());
    let mut batches = StreamRng::new(seed, "probe-batches");
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        batches.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let x = train.samples().select_rows(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let mut tape = Tape::new();
            let input = tape.constant(&x)?;
            let fp = model.forward(&mut tape, input, BatchNormMode::Train, Params::Trainable, true)?;
            let loss = tape.cross_entropy(fp.output, &y)?;
            let grads = tape.backward(loss)?;
            apply_gradient(&mut model, &mut opt, &gradient_vector(&grads, &fp.params)?)?;
        }
    }
    let hash = hash_model(&model, classes);
    let mut probe = ProbeClassifier { model, classes, hash, validation_accuracy: 0.0 };
    probe.validation_accuracy = probe.accuracy(&valid)?;
    if probe.validation_accuracy < config.accuracy_floor {
        return Err(Error::Training(format!(
            "probe reached {:.3} held-out accuracy, below the floor {}",
            probe.validation_accuracy, config.accuracy_floor
        )));
    }
    Ok(probe)
}

impl ProbeClassifier {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        self.hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validation_accuracy(&self) -> f64 {
        self.validation_accuracy
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.model.spec().input_shape
    }

    /// Row-major `n × k` class probabilities.
    pub fn probabilities<T: Scalar>(&self, samples: &Tensor<T>) -> Result<Vec<f64>> {
        let logits = self.model.clone().predict(&samples.cast::<f64>(), BatchNormMode::Eval)?;
        Ok(softmax_rows(logits.data(), self.classes))
    }

    pub fn predict_labels<T: Scalar>(&self, samples: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.probabilities(samples)?.chunks_exact(self.classes).map(argmax).collect())
    }

    pub fn accuracy<T: Scalar>(&self, dataset: &LabeledDataset<T>) -> Result<f64> {
        let predicted = self.predict_labels(dataset.samples())?;
        let hits = predicted.iter().zip(dataset.labels()).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / dataset.len() as f64)
    }

    /// Penultimate-layer embeddings.
    pub fn features<T: Scalar>(&self, samples: &Tensor<T>) -> Result<Tensor<f64>> {
        self.model.clone().features(&samples.cast::<f64>(), BatchNormMode::Eval)
    }

    pub fn moments<T: Scalar>(&self, samples: &Tensor<T>) -> Result<GaussianMoments> {
        let f = self.features(samples)?;
        GaussianMoments::from_features(f.data(), f.row_len())
    }

    pub fn inception_score<T: Scalar>(&self, samples: &Tensor<T>, splits: usize) -> Result<f64> {
        inception_score(&self.probabilities(samples)?, self.classes, splits)
    }

    /// FID of `samples` against precomputed reference moments.
    pub fn fid<T: Scalar>(&self, reference: &GaussianMoments, samples: &Tensor<T>) -> Result<Fid> {
        fid(reference, &self.moments(samples)?)
    }
}

impl<T: Scalar> Scorer<T> for ProbeClassifier {
    fn inception_score(&self, samples: &Tensor<T>, splits: usize) -> Result<f64> {
        ProbeClassifier::inception_score(self, samples, splits)
    }
}

/// Held-out accuracy of a multinomial logistic regression fitted on
/// `(train, train_labels)`. Inputs are flattened per sample.
pub fn linear_evaluation<T: Scalar>(
    train: &Tensor<T>,
    train_labels: &[usize],
    test: &Tensor<T>,
    test_labels: &[usize],
    classes: usize,
) -> Result<f64> {
    if train.rows() != train_labels.len() || test.rows() != test_labels.len() {
        return Err(Error::Dimension("sample and label counts differ".into()));
    }
    if train.row_len() != test.row_len() {
        return Err(Error::Dimension(format!("train width {} vs test width {}", train.row_len(), test.row_len())));
    }
    if classes == 0 || train_labels.iter().chain(test_labels).any(|&l| l >= classes) {
        return Err(Error::Data(format!("labels outside [0, {classes})")));
    }
    let d = train.row_len();
    let spec = ModelSpec::new("linear-eval", &[d], vec![LayerSpec::linear(d, classes, Activation::Identity)])?;
    let mut model = Model::<f64>::from_params(spec, &vec![0.0; d * classes + classes])?;
    let mut opt = OptimizerState::new(OptimizerKind::Adam { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, model.param_count());
    let x = train.cast::<f64>().reshape(vec![train.rows(), d])?;
    for _ in 0..300 {
        let mut tape = Tape::new();
        let input = tape.constant(&x)?;
        let fp = model.forward(&mut tape, input, BatchNormMode::Train, Params::Trainable, true)?;
        let loss = tape.cross_entropy(fp.output, train_labels)?;
        let grads = tape.backward(loss)?;
        apply_gradient(&mut model, &mut opt, &gradient_vector(&grads, &fp.params)?)?;
    }
    let xt = test.cast::<f64>().reshape(vec![test.rows(), d])?;
    let logits = model.predict(&xt, BatchNormMode::Eval)?;
    let hits = logits.data().chunks_exact(classes).map(argmax).zip(test_labels).filter(|(a, b)| a == *b).count();
    Ok(hits as f64 / test_labels.len() as f64)
}
