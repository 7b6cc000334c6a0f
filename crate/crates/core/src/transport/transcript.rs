use alloc::format;
use alloc::vec::Vec;

use super::wire::read_header;
use crate::error::{Error, Result};

pub const TRANSCRIPT_MAGIC: [u8; 4] = *b"UFGT";
pub const TRANSCRIPT_VERSION: u8 = 1;
const PREAMBLE_LEN: usize = 4 + 1 + 8 + 8;

/// Captured frames plus the seed of the experiment that produced them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub seed_id: u64,
    pub frames: Vec<Vec<u8>>,
}

impl Transcript {
    pub fn new(seed_id: u64, frames: Vec<Vec<u8>>) -> Self {
        Transcript { seed_id, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Magic, version, seed id, frame count, then the frames back to back.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.frames.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(PREAMBLE_LEN + body);
        out.extend_from_slice(&TRANSCRIPT_MAGIC);
        out.push(TRANSCRIPT_VERSION);
        out.extend_from_slice(&self.seed_id.to_le_bytes());
        out.extend_from_slice(&(self.frames.len() as u64).to_le_bytes());
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }

    /// Parses a transcript. Frame boundaries come from each frame's declared
    /// payload length; errors name the offending frame index.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let preamble = |reason: &str| Error::Transcript { index: 0, reason: format!("header: {reason}") };
        if bytes.len() < PREAMBLE_LEN {
            return Err(preamble("truncated"));
        }
        if bytes[..4] != TRANSCRIPT_MAGIC {
            return Err(preamble("bad magic"));
        }
        if bytes[4] != TRANSCRIPT_VERSION {
            return Err(preamble(&format!("unsupported version {}", bytes[4])));
        }
        let seed_id = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        let mut frames = Vec::new();
        let mut pos = PREAMBLE_LEN;
        for index in 0..count as usize {
            if pos >= bytes.len() {
                return Err(Error::Transcript { index, reason: format!("missing; header declares {count} frames") });
            }
            let header = read_header(&bytes[pos..])
                .map_err(|e| Error::Transcript { index, reason: format!("{e} (file offset {pos})") })?;
            let end = pos + header.frame_len();
            frames.push(bytes[pos..end].to_vec());
            pos = end;
        }
        if pos != bytes.len() {
            return Err(Error::Transcript { index: count as usize, reason: "trailing bytes after last frame".into() });
        }
        Ok(Transcript { seed_id, frames })
    }
}
