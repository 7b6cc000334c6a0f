use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Area resampling of an `(n, C, H, W)` batch to `(n, C, h, w)`.
///
/// Every output pixel is the overlap-weighted mean of the source pixels its
/// footprint covers, so integer factors reduce to plain mean pooling.
pub fn downscale<T: Scalar>(images: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = images.shape();
    if s.len() != 4 {
        return Err(Error::Dimension(format!("resample expects (n, C, H, W), got {s:?}")));
    }
    if h == 0 || w == 0 {
        return Err(Error::Dimension("resample target must be non-empty".into()));
    }
    let (n, c, sh, sw) = (s[0], s[1], s[2], s[3]);
    let rows = weights(sh, h);
    let cols = weights(sw, w);
    let src = images.data();
    let mut out = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let base = &src[plane * sh * sw..(plane + 1) * sh * sw];
        let dst = &mut out[plane * h * w..(plane + 1) * h * w];
        for (oy, ry) in rows.iter().enumerate() {
            for (ox, rx) in cols.iter().enumerate() {
                let mut acc = 0.0;
                for &(y, wy) in ry {
                    for &(x, wx) in rx {
                        acc += wy * wx * base[y * sw + x].as_f64();
                    }
                }
                dst[oy * w + ox] = T::from_f64(acc);
            }
        }
    }
    Tensor::new(vec![n, c, h, w], out)
}

/// Source indices and normalized overlap weights for each output cell.
fn weights(src: usize, dst: usize) -> alloc::vec::Vec<alloc::vec::Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut taps = alloc::vec::Vec::new();
            let mut i = libm::floor(lo) as usize;
            while (i as f64) < hi && i < src {
                let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                if overlap > 0.0 {
                    taps.push((i, overlap / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}
