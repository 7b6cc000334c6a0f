// Dense inner loops shared by the tape ops. All buffers are row-major.

use super::Scalar;

/// `out[m×n] (+)= a[m×k] · b[k×n]`
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    if !acc {
        out[..m * n].fill(T::zero());
    }
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×n] (+)= aᵀ · b` with `a[m×k]`, `b[m×n]`.
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    if !acc {
        out[..k * n].fill(T::zero());
    }
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] (+)= a · bᵀ` with `a[m×n]`, `b[k×n]`.
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            if acc {
                out[i * k + p] += s;
            } else {
                out[i * k + p] = s;
            }
        }
    }
}

/// Spatial geometry of a 2-D convolution over one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Output size of a strided convolution, or `None` when the kernel does not fit.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let full = (input - 1) * stride + kernel;
    if stride == 0 || full <= 2 * padding {
        return None;
    }
    Some(full - 2 * padding)
}

/// Unfolds one `(C, H, W)` image into a `(C·kh·kw) × (oh·ow)` column matrix.
pub fn im2col<T: Scalar>(img: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        dst[oy * g.out_w + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < g.height
                            && (ix as usize) < g.width
                        {
                            img[(c * g.height + iy as usize) * g.width + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `img`.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, img: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix < 0 || ix as usize >= g.width {
                            continue;
                        }
                        img[(c * g.height + iy as usize) * g.width + ix as usize] +=
                            src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut out = [0.0f64; 4];
        gemm(&a, &b, &mut out, 2, 3, 2, false);
        assert_eq!(out, [58.0, 64.0, 139.0, 154.0]);

        // aᵀ·a where a is 2x3 -> 3x3
        let mut ata = [0.0f64; 9];
        gemm_tn(&a, &a, &mut ata, 2, 3, 3, false);
        assert_eq!(ata[0], 1.0 + 16.0);
        assert_eq!(ata[4], 4.0 + 25.0);

        // a·aᵀ -> 2x2
        let mut aat = [0.0f64; 4];
        gemm_nt(&a, &a, &mut aat, 2, 2, 3, false);
        assert_eq!(aat, [14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn output_dims() {
        assert_eq!(conv_out_dim(64, 4, 2, 1), Some(32));
        assert_eq!(conv_out_dim(4, 4, 1, 0), Some(1));
        assert_eq!(conv_out_dim(2, 4, 1, 0), None);
        assert_eq!(conv_transpose_out_dim(1, 4, 1, 0), Some(4));
        assert_eq!(conv_transpose_out_dim(4, 4, 2, 1), Some(8));
    }
}
