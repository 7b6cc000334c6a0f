//! IDX files of unsigned bytes.
//!
//! Layout: two zero bytes, type code `0x08`, rank, then one big-endian `u32`
//! per dimension followed by the row-major data.

use std::path::Path;

use ufedgan_core::data::LabeledDataset;

use crate::error::{read, write, CliError, Result};

/// Magic of rank-3 unsigned-byte data (images).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic of rank-1 unsigned-byte data (labels).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const UBYTE: u8 = 0x08;

/// A parsed unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        ((UBYTE as u32) << 8) | self.dims.len() as u32
    }
}

/// Parses `bytes`; errors carry the byte offset of the problem.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, (usize, String)> {
    if bytes.len() < 4 {
        return Err((bytes.len(), "truncated magic".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err((0, format!("bad magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3])));
    }
    if bytes[2] != UBYTE {
        return Err((2, format!("unsupported element type 0x{:02x}; only unsigned bytes are read", bytes[2])));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err((3, "rank 0".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err((bytes.len(), format!("truncated header: {rank} dimensions need {header} bytes")));
    }
    let dims: Vec<usize> =
        (0..rank).map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize).collect();
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or((4, "dimension product overflows".to_string()))?;
    let body = bytes.len() - header;
    if body < count {
        return Err((bytes.len(), format!("truncated data: {count} bytes declared, {body} present")));
    }
    if body > count {
        return Err((header + count, format!("{} trailing bytes after data", body - count)));
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    parse_idx(&read(path)?).map_err(|(offset, reason)| CliError::parse(path, offset, reason))
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    write(path, encode_idx(array))
}

/// Loads an image file `(n, h, w)` and a label file `(n)` as a dataset of
/// shape `(n, 1, h, w)` with pixels mapped from `[0, 255]` to `[-1, 1]`.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<LabeledDataset<f32>> {
    let img = read_idx(images)?;
    if img.magic() != IDX_IMAGES_MAGIC {
        return Err(CliError::parse(images, 0, format!("magic 0x{:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}", img.magic())));
    }
    let lab = read_idx(labels)?;
    if lab.magic() != IDX_LABELS_MAGIC {
        return Err(CliError::parse(labels, 0, format!("magic 0x{:08x}, expected 0x{IDX_LABELS_MAGIC:08x}", lab.magic())));
    }
    let (n, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(CliError::parse(labels, 4, format!("{} labels for {n} images", lab.dims[0])));
    }
    let labels_vec: Vec<usize> = lab.data.iter().map(|&l| l as usize).collect();
    let classes = labels_vec.iter().max().map_or(1, |m| m + 1);
    Ok(LabeledDataset::from_u8_pixels(&img.data, &[n, 1, h, w], labels_vec, classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_errors_name_offsets() {
        assert_eq!(parse_idx(&[0, 0]).unwrap_err().0, 2);
        assert_eq!(parse_idx(&[1, 0, 8, 3]).unwrap_err().0, 0);
        assert_eq!(parse_idx(&[0, 0, 9, 3]).unwrap_err().0, 2);
        let mut f = encode_idx(&IdxArray { dims: vec![2, 2, 2], data: vec![7; 8] });
        f.pop();
        assert_eq!(parse_idx(&f).unwrap_err().0, f.len());
        f.extend_from_slice(&[0, 0]);
        assert_eq!(parse_idx(&f).unwrap_err().0, 16 + 8);
    }

    #[test]
    fn image_magic_constant() {
        let a = IdxArray { dims: vec![4, 28, 28], data: vec![0; 4 * 28 * 28] };
        assert_eq!(a.magic(), IDX_IMAGES_MAGIC);
        assert_eq!(&encode_idx(&a)[..4], &[0, 0, 8, 3]);
    }
}
