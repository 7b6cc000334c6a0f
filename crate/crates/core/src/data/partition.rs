use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const PARTITION_STREAM: &str = "partition";

/// Per-class Dirichlet shares and the resulting sample-to-user assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub users: usize,
    pub beta: f64,
    pub seed: u64,
    /// `proportions[i][j]`: share of class `i` given to user `j`.
    pub proportions: Vec<Vec<f64>>,
    /// User index of every sample.
    pub assignment: Vec<usize>,
}

impl PartitionPlan {
    pub fn classes(&self) -> usize {
        self.proportions.len()
    }

    /// Sample indices owned by `user`, ascending.
    pub fn user_indices(&self, user: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &u)| u == user).map(|(i, _)| i).collect()
    }

    /// `counts[i][j]`: samples of class `i` held by user `j`.
    pub fn counts(&self, labels: &[usize]) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.users]; self.classes()];
        for (&l, &u) in labels.iter().zip(&self.assignment) {
            counts[l][u] += 1;
        }
        counts
    }

    pub fn user_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.users];
        for &u in &self.assignment {
            sizes[u] += 1;
        }
        sizes
    }
}

/// Splits samples across `users` with per-class shares drawn from `Dir(beta)`.
///
/// Each class draws `users` independent Gamma(β, 1) variates from the
/// `partition` stream and normalizes them. The class's sample indices are
/// shuffled on the same stream and cut into contiguous runs whose lengths are
/// the shares times the class size, rounded by largest remainder.
pub fn dirichlet_partition(labels: &[usize], classes: usize, users: usize, beta: f64, seed: u64) -> Result<PartitionPlan> {
    if classes == 0 {
        return Err(Error::Data("cannot partition a dataset with zero classes".into()));
    }
    if users == 0 {
        return Err(Error::Config("partition needs at least one user".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("concentration must be positive, got {beta}")));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
    }
    let mut rng = StreamRng::new(seed, PARTITION_STREAM);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut proportions = Vec::with_capacity(classes);
    let mut assignment = vec![0; labels.len()];
    for members in &mut by_class {
        let mut draws: Vec<f64> = (0..users).map(|_| rng.gamma(beta)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            draws.iter_mut().for_each(|d| *d /= total);
        } else {
            // All draws underflowed; tiny β puts the class on one user.
            let pick = rng.below(users);
            draws.iter_mut().enumerate().for_each(|(j, d)| *d = if j == pick { 1.0 } else { 0.0 });
        }
        rng.shuffle(members);
        let counts = largest_remainder(&draws, members.len());
        let mut start = 0;
        for (user, &c) in counts.iter().enumerate() {
            for &idx in &members[start..start + c] {
                assignment[idx] = user;
            }
            start += c;
        }
        proportions.push(draws);
    }
    Ok(PartitionPlan { users, beta, seed, proportions, assignment })
}

fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - libm::floor(quotas[a]), quotas[b] - libm::floor(quotas[b]));
        fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}
