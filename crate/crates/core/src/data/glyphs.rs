use alloc::vec;
use alloc::vec::Vec;

use super::dataset::LabeledDataset;
use crate::error::Result;
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

pub const GLYPH_SIZE: usize = 16;
pub const GLYPH_CLASSES: usize = 10;

/// Whether pixel `(y, x)` is inked for `class`, in centred coordinates.
fn inked(class: usize, y: i32, x: i32) -> bool {
    let (ay, ax) = (y.abs(), x.abs());
    match class {
        0 => ay <= 1 && ax <= 5,
        1 => ax <= 1 && ay <= 5,
        2 => (ay <= 1 && ax <= 5) || (ax <= 1 && ay <= 5),
        3 => ((y - x).abs() <= 1 || (y + x).abs() <= 1) && ay <= 5 && ax <= 5,
        4 => ay <= 5 && ax <= 5 && (ay >= 4 || ax >= 4),
        5 => ay <= 3 && ax <= 3,
        6 => {
            let r2 = y * y + x * x;
            (16..=36).contains(&r2)
        }
        7 => ((-5..=-4).contains(&y) && ax <= 5) || (ax <= 1 && (-5..=5).contains(&y)),
        8 => ((-5..=-4).contains(&x) && ay <= 5) || ((4..=5).contains(&y) && (-5..=5).contains(&x)),
        _ => ay <= 5 && ax <= 5 && ((-4..=-3).contains(&y) || (3..=4).contains(&y)),
    }
}

/// Synthetic 16×16 grayscale glyphs in ten shape classes, values in `[-1, 1]`.
///
/// Each sample is its class's stencil shifted by up to one pixel in each
/// direction, with a little Gaussian ink noise. Labels cycle through the
/// classes so every class has `n / 10` or one more samples.
pub fn glyph_dataset<T: Scalar>(n: usize, rng: &mut StreamRng) -> Result<LabeledDataset<T>> {
    let px = GLYPH_SIZE * GLYPH_SIZE;
    let mut data = Vec::with_capacity(n * px);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % GLYPH_CLASSES;
        let dy = rng.below(3) as i32 - 1;
        let dx = rng.below(3) as i32 - 1;
        let mut img = vec![T::from_f64(-1.0); px];
        for (p, v) in img.iter_mut().enumerate() {
            let y = (p / GLYPH_SIZE) as i32 - 8 - dy;
            let x = (p % GLYPH_SIZE) as i32 - 8 - dx;
            if inked(class, y, x) {
                let ink = 1.0 - libm::fabs(0.1 * rng.standard_normal());
                *v = T::from_f64(ink.max(-1.0));
            }
        }
        data.extend(img);
        labels.push(class);
    }
    LabeledDataset::new(Tensor::new(vec![n, 1, GLYPH_SIZE, GLYPH_SIZE], data)?, labels, GLYPH_CLASSES)
}
