//! Image grids as binary PGM (one channel) or PPM (three channels).

use ufedgan_core::error::Error;
use ufedgan_core::Tensor;

use crate::error::Result;

/// Maps `[-1, 1]` to `[0, 255]`, clamping.
fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Tiles `(n, C, H, W)` images row-major into a grid `cols` wide with a
/// one-pixel black border between tiles. Returns a P5 file for `C = 1` and
/// a P6 file for `C = 3`.
pub fn image_grid(images: &Tensor<f32>, cols: usize) -> Result<Vec<u8>> {
    let &[n, c, h, w] = images.shape() else {
        return Err(Error::Dimension(format!("image grid needs (n, C, H, W), got {:?}", images.shape())).into());
    };
    if c != 1 && c != 3 {
        return Err(Error::Dimension(format!("image grid needs 1 or 3 channels, got {c}")).into());
    }
    let cols = cols.clamp(1, n.max(1));
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * (w + 1) + 1, rows * (h + 1) + 1);
    let mut pixels = vec![0u8; gw * gh * c];
    for i in 0..n {
        let (ty, tx) = (i / cols, i % cols);
        let img = images.row(i);
        for y in 0..h {
            for x in 0..w {
                let (py, px) = (ty * (h + 1) + 1 + y, tx * (w + 1) + 1 + x);
                for ch in 0..c {
                    pixels[(py * gw + px) * c + ch] = to_byte(img[(ch * h + y) * w + x]);
                }
            }
        }
    }
    let mut out = format!("P{}\n{gw} {gh}\n255\n", if c == 1 { 5 } else { 6 }).into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let t = Tensor::new(vec![3, 1, 2, 2], vec![1.0f32; 12]).unwrap();
        let g = image_grid(&t, 2).unwrap();
        let header = b"P5\n7 7\n255\n";
        assert_eq!(&g[..header.len()], header);
        let px = &g[header.len()..];
        assert_eq!(px.len(), 49);
        assert_eq!(px[7 + 1], 255);
        assert_eq!(px[0], 0);
        assert_eq!(px.iter().filter(|&&b| b == 255).count(), 12);
    }
}
