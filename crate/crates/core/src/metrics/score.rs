use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};

/// Inception score of row-stochastic class probabilities `probs` (`n × k`).
///
/// The rows are cut into `splits` contiguous groups; each group scores
/// `exp(mean_x KL(p(y|x) ‖ p(y)))` with `p(y)` the group's mean row, and the
/// result is the mean over groups.
pub fn inception_score(probs: &[f64], classes: usize, splits: usize) -> Result<f64> {
    if classes == 0 || probs.len() % classes != 0 {
        return Err(Error::Dimension(format!("{} probabilities do not form rows of {classes}", probs.len())));
    }
    let n = probs.len() / classes;
    if splits == 0 || n < 2 * splits {
        return Err(Error::Contract(format!("{n} samples are too few for {splits} splits")));
    }
    let mut total = 0.0;
    for s in 0..splits {
        let (lo, hi) = (s * n / splits, (s + 1) * n / splits);
        let rows = &probs[lo * classes..hi * classes];
        let m = (hi - lo) as f64;
        let mut marginal = vec![0.0; classes];
        for row in rows.chunks_exact(classes) {
            marginal.iter_mut().zip(row).for_each(|(a, p)| *a += p / m);
        }
        let mut kl = 0.0;
        for row in rows.chunks_exact(classes) {
            for (p, q) in row.iter().zip(&marginal) {
                if *p > 0.0 {
                    kl += p * (libm::log(*p) - libm::log(*q));
                }
            }
        }
        total += libm::exp(kl / m);
    }
    Ok(total / splits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn uniform_probe_scores_one() {
        let probs = vec![0.25; 40 * 4];
        assert!((inception_score(&probs, 4, 5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn confident_balanced_probe_scores_k() {
        let k = 5;
        let probs: Vec<f64> = (0..50).flat_map(|i| (0..k).map(move |c| if c == i % k { 1.0 } else { 0.0 })).collect();
        assert!((inception_score(&probs, k, 2).unwrap() - k as f64).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_is_a_contract_error() {
        assert!(matches!(inception_score(&[0.5, 0.5, 0.5, 0.5], 2, 2), Err(Error::Contract(_))));
    }
}
