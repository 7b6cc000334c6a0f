//! Flattened parameter/gradient snapshots exchanged on the wire.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered, flattened snapshot of a model's parameters or their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T>(Vec<T>);

impl<T: Scalar> ParameterVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        ParameterVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(alloc::vec![T::zero(); len])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Element-wise sum of two vectors of equal length.
    pub fn add(&self, other: &ParameterVector<T>) -> Result<ParameterVector<T>> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "cannot add parameter vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(ParameterVector(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect()))
    }

    pub fn max_abs_diff(&self, other: &ParameterVector<T>) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        Some(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> Deref for ParameterVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParameterVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Concatenates tensors in the given order.
pub fn flatten_params<T: Scalar>(tensors: &[Tensor<T>]) -> ParameterVector<T> {
    let mut out = Vec::with_capacity(tensors.iter().map(Tensor::len).sum());
    for t in tensors {
        out.extend_from_slice(t.data());
    }
    ParameterVector(out)
}

/// Splits `vec` into tensors of the given shapes.
pub fn unflatten_params<T: Scalar>(vec: &[T], shapes: &[Vec<usize>]) -> Result<Vec<Tensor<T>>> {
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if total != vec.len() {
        return Err(Error::Dimension(format!(
            "shapes hold {total} scalars but the vector has {}",
            vec.len()
        )));
    }
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::new(s.clone(), vec[offset..offset + n].to_vec());
            offset += n;
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn flatten_concatenates_in_order() {
        let a = Tensor::<f32>::from_f64([2], &[1.0, 2.0]).unwrap();
        let b = Tensor::<f32>::from_f64([1], &[3.0]).unwrap();
        assert_eq!(flatten_params(&[a, b]).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn unflatten_rejects_size_mismatch() {
        let err = unflatten_params(&[1.0f32, 2.0, 3.0], &[vec![2, 2]]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(shapes in prop::collection::vec(prop::collection::vec(1usize..4, 1..4), 1..5), seed in any::<u64>()) {
            let mut rng = crate::rng::StreamRng::new(seed, "roundtrip");
            let tensors: Vec<Tensor<f32>> = shapes
                .iter()
                .map(|s| {
                    let n: usize = s.iter().product();
                    Tensor::new(s.clone(), (0..n).map(|_| rng.normal::<f32>(0.0, 3.0)).collect()).unwrap()
                })
                .collect();
            let flat = flatten_params(&tensors);
            let back = unflatten_params(&flat, &shapes).unwrap();
            for (a, b) in tensors.iter().zip(&back) {
                prop_assert_eq!(a.shape(), b.shape());
                let abits: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
                let bbits: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
        }
    }
}
