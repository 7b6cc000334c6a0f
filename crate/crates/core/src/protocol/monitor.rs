use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Whether the best IS of the last `window` rounds improved on the best of
/// the `window` rounds before by less than `epsilon`. Needs `2 * window`
/// entries; shorter histories never plateau.
pub fn plateaued(history: &[f64], window: usize, epsilon: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let best = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best(&history[n - window..]) - best(&history[n - 2 * window..n - window]) < epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Plateau,
    RoundCap,
}

/// Per-user IS history and stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceMonitor {
    window: usize,
    epsilon: f64,
    max_rounds: u32,
    history: Vec<f64>,
}

impl ConvergenceMonitor {
    pub fn new(window: usize, epsilon: f64, max_rounds: u32) -> Self {
        ConvergenceMonitor { window, epsilon, max_rounds, history: Vec::new() }
    }

    pub fn record(&mut self, inception_score: f64) {
        self.history.push(inception_score);
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn rounds(&self) -> u32 {
        self.history.len() as u32
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        if plateaued(&self.history, self.window, self.epsilon) {
            Some(StopReason::Plateau)
        } else if self.rounds() >= self.max_rounds {
            Some(StopReason::RoundCap)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn needs_two_windows() {
        assert!(!plateaued(&[1.0; 19], 10, 0.05));
        assert!(plateaued(&[1.0; 20], 10, 0.05));
    }

    #[test]
    fn improvement_keeps_training() {
        let rising: Vec<f64> = (0..20).map(|i| 1.0 + 0.01 * i as f64).collect();
        assert!(!plateaued(&rising, 10, 0.05));
        assert!(plateaued(&rising, 10, 0.2));
    }

    #[test]
    fn zero_cap_stops_immediately() {
        let m = ConvergenceMonitor::new(10, 0.05, 0);
        assert_eq!(m.stop_reason(), Some(StopReason::RoundCap));
        let mut m = ConvergenceMonitor::new(2, 0.05, 100);
        for v in vec![1.0, 2.0, 2.01, 2.02] {
            m.record(v);
        }
        assert_eq!(m.stop_reason(), Some(StopReason::Plateau));
    }
}
