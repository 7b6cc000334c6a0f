use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

/// Samples with integer class labels.
///
/// Labels drive partitioning and evaluation only; clients see an
/// [`UnlabeledView`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    samples: Tensor<T>,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(samples: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Data("dataset declares zero classes".into()));
        }
        if samples.shape().len() < 2 {
            return Err(Error::Data(format!("samples need a batch dimension, got shape {:?}", samples.shape())));
        }
        if samples.rows() != labels.len() {
            return Err(Error::Data(format!("{} samples but {} labels", samples.rows(), labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
        }
        if !samples.is_finite() {
            return Err(Error::Data("non-finite sample value".into()));
        }
        Ok(LabeledDataset { samples, labels, classes })
    }

    /// Builds a dataset from 8-bit pixels, mapping 0 → -1 and 255 → +1.
    pub fn from_u8_pixels(pixels: &[u8], shape: &[usize], labels: Vec<usize>, classes: usize) -> Result<Self> {
        let samples = Tensor::new(shape.to_vec(), pixels.iter().map(|&p| T::from_f64(p as f64 / 127.5 - 1.0)).collect())
            .map_err(|e| Error::Data(format!("{e}")))?;
        Self::new(samples, labels, classes)
    }

    pub fn samples(&self) -> &Tensor<T> {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("empty subset".into()));
        }
        let samples = self.samples.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(LabeledDataset { samples, labels, classes: self.classes })
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Client-facing copy of the given samples without labels.
    pub fn unlabeled_view(&self, indices: &[usize]) -> Result<UnlabeledView<T>> {
        if indices.is_empty() {
            return Ok(UnlabeledView { samples: None });
        }
        Ok(UnlabeledView { samples: Some(self.samples.select_rows(indices)?) })
    }

    /// Client-facing copy of the whole dataset.
    pub fn unlabeled(&self) -> UnlabeledView<T> {
        UnlabeledView { samples: Some(self.samples.clone()) }
    }

    /// Splits off the last `fraction` of a seeded permutation as a held-out set.
    pub fn split(&self, fraction: f64, rng: &mut StreamRng) -> Result<(Self, Self)> {
        let n = self.len();
        let held = libm::round(n as f64 * fraction) as usize;
        if held == 0 || held >= n {
            return Err(Error::Data(format!("split fraction {fraction} leaves an empty side of {n} samples")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        Ok((self.subset(&order[..n - held])?, self.subset(&order[n - held..])?))
    }
}

/// Unlabeled samples held by one client. There is no label accessor.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledView<T> {
    samples: Option<Tensor<T>>,
}

impl<T: Scalar> UnlabeledView<T> {
    pub fn from_samples(samples: Tensor<T>) -> Self {
        UnlabeledView { samples: Some(samples) }
    }

    pub fn empty() -> Self {
        UnlabeledView { samples: None }
    }

    pub fn len(&self) -> usize {
        self.samples.as_ref().map_or(0, Tensor::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> Option<&Tensor<T>> {
        self.samples.as_ref()
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.samples.as_ref().map(|s| &s.shape()[1..])
    }

    /// Draws `size` samples uniformly with replacement.
    pub fn batch(&self, size: usize, rng: &mut StreamRng) -> Result<Tensor<T>> {
        let samples = self.samples.as_ref().ok_or_else(|| Error::Data("client holds no samples".into()))?;
        if size == 0 {
            return Err(Error::Contract("batch size must be positive".into()));
        }
        let rows: Vec<usize> = (0..size).map(|_| rng.below(samples.rows())).collect();
        samples.select_rows(&rows)
    }
}
