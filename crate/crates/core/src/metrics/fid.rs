use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_CLIP: f64 = -1e-8;
const SQRT_RESIDUAL_TOL: f64 = 1e-6;

/// Mean and covariance of a set of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, unbiased.
    pub cov: Vec<f64>,
    pub count: usize,
}

impl GaussianMoments {
    /// Moments of `n × d` row-major features.
    pub fn from_features(features: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || features.len() % dim != 0 {
            return Err(Error::Dimension(format!("{} features do not form rows of {dim}", features.len())));
        }
        let n = features.len() / dim;
        if n < 2 {
            return Err(Error::Contract("moments need at least two samples".into()));
        }
        let x = DMatrix::from_row_slice(n, dim, features);
        let mean = x.row_mean();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(GaussianMoments { mean: mean.iter().copied().collect(), cov: row_major(&cov), count: n })
    }

    pub fn from_parts(mean: Vec<f64>, cov: Vec<f64>, count: usize) -> Result<Self> {
        if cov.len() != mean.len() * mean.len() {
            return Err(Error::Dimension(format!("covariance of {} entries for dimension {}", cov.len(), mean.len())));
        }
        Ok(GaussianMoments { mean, cov, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = DMatrix::from_row_slice(d, d, &self.cov);
        (&m + m.transpose()) * 0.5
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Fréchet distance between two Gaussian fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Fid {
    pub value: f64,
    /// Set when the matrix square root is inaccurate or the product had
    /// materially negative eigenvalues.
    pub warning: Option<String>,
}

/// Symmetric PSD square root with eigenvalues below zero clipped.
fn sqrt_psd(m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(m);
    let most_negative = eig.eigenvalues.iter().copied().fold(0.0, f64::min);
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))));
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), most_negative)
}

/// `‖μ1 − μ2‖² + tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^{1/2})`.
///
/// The trace of the cross term is taken as `tr sqrt(S Σ2 S)` with
/// `S = Σ1^{1/2}`, which is symmetric and shares its spectrum with `Σ1 Σ2`.
pub fn fid(a: &GaussianMoments, b: &GaussianMoments) -> Result<Fid> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("moments of dimension {} and {}", a.dim(), b.dim())));
    }
    let (s1, s2) = (a.cov_matrix(), b.cov_matrix());
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let (root1, neg1) = sqrt_psd(s1.clone());
    let inner = &root1 * &s2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner.clone());
    let neg = eig.eigenvalues.iter().copied().fold(neg1, f64::min);
    let cross: f64 = eig.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))).sum();
    let value = (mean_term + s1.trace() + s2.trace() - 2.0 * cross).max(0.0);
    if !value.is_finite() {
        return Err(Error::Numerical("FID is not finite".into()));
    }
    let (root, _) = sqrt_psd(inner.clone());
    let residual = (&root * &root - &inner).norm() / inner.norm().max(1e-300);
    let warning = if neg < EIGEN_CLIP {
        Some(format!("clipped eigenvalue {neg:e} in covariance square root"))
    } else if residual > SQRT_RESIDUAL_TOL && inner.norm() > 1e-12 {
        Some(format!("matrix square root residual {residual:e}"))
    } else {
        None
    };
    Ok(Fid { value, warning })
}
