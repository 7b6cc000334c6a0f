use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

/// Quartile boundaries of the standard normal, used to label 1-D samples.
const NORMAL_QUARTILES: [f64; 3] = [-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Low-dimensional reference distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDistribution {
    Gaussian1d { mean: f64, std: f64 },
    Mixture2d { components: Vec<MixtureComponent> },
    /// One-hot symbols over `probs.len()` categories.
    Discrete { probs: Vec<f64> },
}

impl ToyDistribution {
    /// Four equal-weight isotropic components on the corners of a square.
    pub fn default_mixture() -> Self {
        let components = [[-2.0, -2.0], [-2.0, 2.0], [2.0, -2.0], [2.0, 2.0]]
            .into_iter()
            .map(|mean| MixtureComponent { weight: 0.25, mean, cov: [[0.09, 0.0], [0.0, 0.09]] })
            .collect();
        ToyDistribution::Mixture2d { components }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ToyDistribution::Gaussian1d { mean, std } => {
                if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::Config(format!("gaussian needs finite mean and std > 0, got ({mean}, {std})")));
                }
            }
            ToyDistribution::Mixture2d { components } => {
                if components.is_empty() {
                    return Err(Error::Config("mixture has no components".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 || components.iter().any(|c| c.weight < 0.0) {
                    return Err(Error::Config(format!("mixture weights sum to {total}")));
                }
                for c in components {
                    cholesky(&c.cov)?;
                }
            }
            ToyDistribution::Discrete { probs } => {
                let total: f64 = probs.iter().sum();
                if probs.is_empty() || (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p < 0.0) {
                    return Err(Error::Config(format!("discrete probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// Width of one sample row.
    pub fn dim(&self) -> usize {
        match self {
            ToyDistribution::Gaussian1d { .. } => 1,
            ToyDistribution::Mixture2d { .. } => 2,
            ToyDistribution::Discrete { probs } => probs.len(),
        }
    }

    /// Number of label classes produced by [`sample_labeled`](Self::sample_labeled).
    pub fn classes(&self) -> usize {
        match self {
            ToyDistribution::Gaussian1d { .. } => NORMAL_QUARTILES.len() + 1,
            ToyDistribution::Mixture2d { components } => components.len(),
            ToyDistribution::Discrete { probs } => probs.len(),
        }
    }

    /// `n` iid samples as an `(n, dim)` tensor.
    pub fn sample<T: Scalar>(&self, n: usize, rng: &mut StreamRng) -> Result<Tensor<T>> {
        Ok(self.sample_labeled::<T>(n, rng)?.samples().clone())
    }

    /// Samples plus a class label: quartile bin (1-D), component (mixture) or symbol.
    pub fn sample_labeled<T: Scalar>(&self, n: usize, rng: &mut StreamRng) -> Result<LabeledDataset<T>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Contract("sample count must be positive".into()));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        match self {
            ToyDistribution::Gaussian1d { mean, std } => {
                for _ in 0..n {
                    let z = rng.standard_normal();
                    data.push(T::from_f64(mean + std * z));
                    labels.push(NORMAL_QUARTILES.iter().filter(|&&q| z >= q).count());
                }
            }
            ToyDistribution::Mixture2d { components } => {
                let factors: Vec<[[f64; 2]; 2]> = components.iter().map(|c| cholesky(&c.cov)).collect::<Result<_>>()?;
                for _ in 0..n {
                    let k = categorical(components.iter().map(|c| c.weight), rng);
                    let (z0, z1) = (rng.standard_normal(), rng.standard_normal());
                    let (c, l) = (&components[k], &factors[k]);
                    data.push(T::from_f64(c.mean[0] + l[0][0] * z0));
                    data.push(T::from_f64(c.mean[1] + l[1][0] * z0 + l[1][1] * z1));
                    labels.push(k);
                }
            }
            ToyDistribution::Discrete { probs } => {
                for _ in 0..n {
                    let k = categorical(probs.iter().copied(), rng);
                    let mut row = vec![T::zero(); d];
                    row[k] = T::one();
                    data.extend(row);
                    labels.push(k);
                }
            }
        }
        LabeledDataset::new(Tensor::new(vec![n, d], data)?, labels, self.classes())
    }
}

fn categorical(weights: impl Iterator<Item = f64>, rng: &mut StreamRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        if w > 0.0 {
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn cholesky(c: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    if (c[0][1] - c[1][0]).abs() > 1e-12 || c[0][0] <= 0.0 {
        return Err(Error::Config(format!("covariance {c:?} is not symmetric positive definite")));
    }
    let l00 = libm::sqrt(c[0][0]);
    let l10 = c[1][0] / l00;
    let rest = c[1][1] - l10 * l10;
    if rest <= 0.0 {
        return Err(Error::Config(format!("covariance {c:?} is not symmetric positive definite")));
    }
    Ok([[l00, 0.0], [l10, libm::sqrt(rest)]])
}
