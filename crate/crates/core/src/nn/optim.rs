use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam with the usual DCGAN settings: lr 2e-4, betas (0.5, 0.999).
    pub fn dcgan_adam() -> Self {
        Self::adam(2e-4)
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    step: u64,
    first: Vec<T>,
    second: Vec<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        let buffers = if matches!(kind, OptimizerKind::Adam { .. }) { param_count } else { 0 };
        OptimizerState { kind, step: 0, first: vec![T::zero(); buffers], second: vec![T::zero(); buffers] }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.first, &self.second)
    }

    /// Applies one step to `params` in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for {} parameters",
                grad.len(),
                params.len()
            )));
        }
        if matches!(self.kind, OptimizerKind::Adam { .. }) && self.first.len() != params.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds moments for {} parameters, model has {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                let lr = T::from_f64(lr);
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as i32;
                let bc1 = 1.0 - libm::pow(beta1, t as f64);
                let bc2 = 1.0 - libm::pow(beta2, t as f64);
                let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                let step_size = T::from_f64(lr / bc1);
                let bc2_sqrt = T::from_f64(libm::sqrt(bc2));
                let eps = T::from_f64(eps);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.first).zip(&mut self.second) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let denom = v.sqrt() / bc2_sqrt + eps;
                    *p -= step_size * *m / denom;
                }
            }
        }
        Ok(())
    }
}

/// One optimizer step on `model` with a flattened gradient in declared parameter order.
pub fn apply_gradient<T: Scalar>(model: &mut Model<T>, state: &mut OptimizerState<T>, gradient: &[T]) -> Result<()> {
    if gradient.len() != model.param_count() {
        return Err(Error::Dimension(format!(
            "gradient of length {} for {} with {} parameters",
            gradient.len(),
            model.spec().name,
            model.param_count()
        )));
    }
    let mut flat = model.flatten();
    state.step(&mut flat, gradient)?;
    model.load(&flat)
}
