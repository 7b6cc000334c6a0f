use alloc::format;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const SSIM_WINDOW: usize = 8;

/// SSIM of two `(C, H, W)` images given as flat slices, averaged over
/// channels. Uses every 8×8 window at stride 1 with uniform weights and
/// unbiased window statistics; `range` is the dynamic range `L`.
pub fn ssim(a: &[f64], b: &[f64], shape: [usize; 3], range: f64) -> Result<f64> {
    let [c, h, w] = shape;
    if a.len() != b.len() || a.len() != c * h * w {
        return Err(Error::Dimension(format!("ssim of {} and {} values for shape {shape:?}", a.len(), b.len())));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!("images of {h}×{w} are smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window")));
    }
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for ch in 0..c {
        let (pa, pb) = (&a[ch * h * w..(ch + 1) * h * w], &b[ch * h * w..(ch + 1) * h * w]);
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    let row = (y + dy) * w + x;
                    for (&u, &v) in pa[row..row + SSIM_WINDOW].iter().zip(&pb[row..row + SSIM_WINDOW]) {
                        sa += u;
                        sb += v;
                        saa += u * u;
                        sbb += v * v;
                        sab += u * v;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa - n * ma * ma) / (n - 1.0);
                let vb = (sbb - n * mb * mb) / (n - 1.0);
                let cov = (sab - n * ma * mb) / (n - 1.0);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

fn image_shape(t: &Tensor<impl Scalar>) -> Result<[usize; 3]> {
    match t.shape() {
        [_, c, h, w] => Ok([*c, *h, *w]),
        s => Err(Error::Dimension(format!("expected an (n, C, H, W) batch, got {s:?}"))),
    }
}

/// Mean over generated images of the best SSIM against any real image.
pub fn mean_best_match_ssim<T: Scalar>(generated: &Tensor<T>, real: &Tensor<T>, range: f64) -> Result<f64> {
    let shape = image_shape(generated)?;
    if image_shape(real)? != shape {
        return Err(Error::Dimension(format!("generated {:?} vs real {:?}", generated.shape(), real.shape())));
    }
    let to_f64 = |r: &[T]| r.iter().map(|v| v.as_f64()).collect::<alloc::vec::Vec<f64>>();
    let reals: alloc::vec::Vec<_> = (0..real.rows()).map(|i| to_f64(real.row(i))).collect();
    let mut total = 0.0;
    for i in 0..generated.rows() {
        let g = to_f64(generated.row(i));
        let mut best = f64::NEG_INFINITY;
        for r in &reals {
            best = best.max(ssim(&g, r, shape, range)?);
        }
        total += best;
    }
    Ok(total / generated.rows() as f64)
}
