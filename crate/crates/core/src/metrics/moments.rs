use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Absolute per-dimension gaps between the means and the standard
/// deviations of two sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGap {
    pub mean_gap: Vec<f64>,
    pub std_gap: Vec<f64>,
}

impl MomentGap {
    pub fn max_mean_gap(&self) -> f64 {
        self.mean_gap.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_std_gap(&self) -> f64 {
        self.std_gap.iter().copied().fold(0.0, f64::max)
    }
}

/// Per-dimension mean and unbiased standard deviation of `(n, ...)` samples.
pub fn mean_std<T: Scalar>(samples: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = (samples.rows(), samples.row_len());
    if n < 2 {
        return Err(Error::Contract("need at least two samples".into()));
    }
    let mut mean = alloc::vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(samples.row(i)).for_each(|(m, v)| *m += v.as_f64());
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = alloc::vec![0.0; d];
    for i in 0..n {
        var.iter_mut().zip(samples.row(i)).zip(&mean).for_each(|((s, v), m)| *s += (v.as_f64() - m).powi(2));
    }
    Ok((mean, var.into_iter().map(|s| libm::sqrt(s / (n - 1) as f64)).collect()))
}

pub const MIN_MOMENT_SAMPLES: usize = 100;

pub fn moment_distance<T: Scalar>(generated: &Tensor<T>, reference: &Tensor<T>) -> Result<MomentGap> {
    if generated.rows() < MIN_MOMENT_SAMPLES || reference.rows() < MIN_MOMENT_SAMPLES {
        return Err(Error::Contract(format!(
            "moment distance needs {MIN_MOMENT_SAMPLES} samples per set, got {} and {}",
            generated.rows(),
            reference.rows()
        )));
    }
    if generated.row_len() != reference.row_len() {
        return Err(Error::Dimension(format!("sample widths {} and {}", generated.row_len(), reference.row_len())));
    }
    let (gm, gs) = mean_std(generated)?;
    let (rm, rs) = mean_std(reference)?;
    Ok(MomentGap {
        mean_gap: gm.iter().zip(&rm).map(|(a, b)| (a - b).abs()).collect(),
        std_gap: gs.iter().zip(&rs).map(|(a, b)| (a - b).abs()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use alloc::vec;

    #[test]
    fn identical_sets_have_no_gap() {
        let x = Tensor::<f64>::new(vec![100, 2], (0..200).map(|i| (i as f64).sin()).collect()).unwrap();
        let g = moment_distance(&x, &x).unwrap();
        assert_eq!((g.max_mean_gap(), g.max_std_gap()), (0.0, 0.0));
    }

    #[test]
    fn shift_moves_only_the_mean() {
        let x = Tensor::<f64>::full(vec![120, 1], 0.5);
        let y = Tensor::<f64>::full(vec![120, 1], -1.0);
        let g = moment_distance(&x, &y).unwrap();
        assert!((g.mean_gap[0] - 1.5).abs() < 1e-12 && g.std_gap[0] == 0.0);
    }

    #[test]
    fn separated_normals() {
        let mut rng = StreamRng::new(3, "moments");
        let a = Tensor::<f64>::new(vec![10_000, 1], (0..10_000).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
        let b = Tensor::<f64>::new(vec![10_000, 1], (0..10_000).map(|_| rng.normal(2.0, 1.0)).collect()).unwrap();
        assert!((moment_distance(&a, &b).unwrap().mean_gap[0] - 2.0).abs() < 0.05);
    }
}
