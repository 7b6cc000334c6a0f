use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::protocol::{MessageBody, ProtocolMessage};
use crate::tensor::{DType, Scalar, Tensor};

pub const FRAME_MAGIC: [u8; 4] = *b"UFGN";
pub const WIRE_VERSION: u8 = 1;
/// Bytes before the payload: magic, version, tag, user, round, step, length.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4 + 4 + 8;

const TAG_DOWN: u8 = 1;
const TAG_UP: u8 = 2;
const TAG_ROUND: u8 = 3;
const LENGTH_OFFSET: usize = 18;

/// Decoded fixed-size part of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub tag: u8,
    pub user: u32,
    pub round: u32,
    pub step: u32,
    pub payload_len: u64,
}

impl FrameHeader {
    pub fn is_uplink(&self) -> bool {
        self.tag == TAG_UP
    }

    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload_len as usize
    }
}

fn frame_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Frame { offset, reason: reason.into() }
}

/// Serializes a tensor as dtype tag, rank, dims and little-endian data.
pub fn encode_tensor_block<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    encode_block(t.shape(), t.data(), out);
}

fn encode_block<T: Scalar>(dims: &[usize], data: &[T], out: &mut Vec<u8>) {
    out.push(T::DTYPE.tag());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.reserve(data.len() * T::DTYPE.width());
    for v in data {
        v.write_le(out);
    }
}

/// Little-endian reader that reports absolute frame offsets.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(frame_err(self.base + self.bytes.len(), format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let at = self.base + self.pos;
        let v = f64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(frame_err(at, format!("non-finite {what}")));
        }
        Ok(v)
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }
}

fn decode_block<T: Scalar>(r: &mut Reader<'_>) -> Result<(Vec<usize>, Vec<T>)> {
    let at = r.offset();
    let dtype = DType::from_tag(r.u8("dtype tag")?).ok_or_else(|| frame_err(at, "unknown dtype tag"))?;
    if dtype != T::DTYPE {
        return Err(frame_err(at, format!("block holds {dtype:?}, expected {:?}", T::DTYPE)));
    }
    let rank = r.u8("rank")? as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for _ in 0..rank {
        let at = r.offset();
        let d = r.u64("dimension")?;
        count = count.checked_mul(d).ok_or_else(|| frame_err(at, "dimension product overflows"))?;
        dims.push(d as usize);
    }
    let width = dtype.width() as u64;
    let at = r.offset();
    let bytes = count
        .checked_mul(width)
        .filter(|&b| b <= (r.bytes.len() - r.pos) as u64)
        .ok_or_else(|| frame_err(at, format!("block declares {count} scalars, more than the payload holds")))?;
    let raw = r.take(bytes as usize, "tensor data")?;
    let mut data = Vec::with_capacity(count as usize);
    for (i, chunk) in raw.chunks_exact(dtype.width()).enumerate() {
        let v = T::read_le(chunk);
        if !v.is_finite() {
            return Err(frame_err(at + i * dtype.width(), "non-finite scalar"));
        }
        data.push(v);
    }
    Ok((dims, data))
}

fn vector_block<T: Scalar>(r: &mut Reader<'_>) -> Result<ParameterVector<T>> {
    let at = r.offset();
    let (dims, data) = decode_block::<T>(r)?;
    if dims.len() != 1 {
        return Err(frame_err(at, format!("parameter block must be rank 1, got rank {}", dims.len())));
    }
    Ok(ParameterVector::new(data))
}

/// Encodes a message as one wire frame.
pub fn encode<T: Scalar>(msg: &ProtocolMessage<T>) -> Vec<u8> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&msg.seq.to_le_bytes());
    let tag = match &msg.body {
        MessageBody::DiscriminatorDown { weights } => {
            encode_block(&[weights.len()], weights, &mut payload);
            TAG_DOWN
        }
        MessageBody::ClientUpdateUp { gradient, loss } => {
            payload.extend_from_slice(&loss.to_le_bytes());
            encode_block(&[gradient.len()], gradient, &mut payload);
            TAG_UP
        }
        MessageBody::RoundComplete { inception_score } => {
            payload.extend_from_slice(&inception_score.to_le_bytes());
            TAG_ROUND
        }
    };
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(WIRE_VERSION);
    out.push(tag);
    out.extend_from_slice(&msg.user.to_le_bytes());
    out.extend_from_slice(&msg.round.to_le_bytes());
    out.extend_from_slice(&msg.step.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Parses the fixed header of the frame starting at `bytes[0]`.
///
/// Only checks that the declared payload fits; trailing bytes are allowed so
/// that concatenated frames can be walked.
pub fn read_header(bytes: &[u8]) -> Result<FrameHeader> {
    if bytes.is_empty() {
        return Err(frame_err(0, "empty frame"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(frame_err(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(frame_err(0, "bad magic"));
    }
    if bytes[4] != WIRE_VERSION {
        return Err(frame_err(4, format!("unsupported version {}", bytes[4])));
    }
    let tag = bytes[5];
    if !(TAG_DOWN..=TAG_ROUND).contains(&tag) {
        return Err(frame_err(5, format!("unknown message tag {tag}")));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let payload_len = u64::from_le_bytes(bytes[LENGTH_OFFSET..HEADER_LEN].try_into().unwrap());
    if payload_len > (bytes.len() - HEADER_LEN) as u64 {
        return Err(frame_err(
            LENGTH_OFFSET,
            format!("payload length {payload_len} exceeds the {} bytes present", bytes.len() - HEADER_LEN),
        ));
    }
    Ok(FrameHeader { tag, user: word(6), round: word(10), step: word(14), payload_len })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ProtocolMessage<T>> {
    let header = read_header(bytes)?;
    if header.frame_len() != bytes.len() {
        return Err(frame_err(
            LENGTH_OFFSET,
            format!("payload length {} but {} bytes follow the header", header.payload_len, bytes.len() - HEADER_LEN),
        ));
    }
    let mut r = Reader { bytes: &bytes[HEADER_LEN..], pos: 0, base: HEADER_LEN };
    let seq = r.u64("sequence number")?;
    let body = match header.tag {
        TAG_DOWN => MessageBody::DiscriminatorDown { weights: vector_block(&mut r)? },
        TAG_UP => {
            let loss = r.f64("loss")?;
            MessageBody::ClientUpdateUp { gradient: vector_block(&mut r)?, loss }
        }
        _ => MessageBody::RoundComplete { inception_score: r.f64("inception score")? },
    };
    if r.pos != r.bytes.len() {
        return Err(frame_err(r.offset(), "trailing bytes after payload"));
    }
    Ok(ProtocolMessage { user: header.user, round: header.round, step: header.step, seq, body })
}

/// Decodes a frame of either precision, widening f32 payloads to f64.
pub fn decode_any(bytes: &[u8]) -> Result<ProtocolMessage<f64>> {
    match decode::<f64>(bytes) {
        Err(Error::Frame { reason, .. }) if reason.starts_with("block holds F32") => {
            let m = decode::<f32>(bytes)?;
            let widen = |v: &ParameterVector<f32>| ParameterVector::new(v.iter().map(|&x| x as f64).collect());
            let body = match m.body {
                MessageBody::DiscriminatorDown { weights } => MessageBody::DiscriminatorDown { weights: widen(&weights) },
                MessageBody::ClientUpdateUp { gradient, loss } => {
                    MessageBody::ClientUpdateUp { gradient: widen(&gradient), loss }
                }
                MessageBody::RoundComplete { inception_score } => MessageBody::RoundComplete { inception_score },
            };
            Ok(ProtocolMessage { user: m.user, round: m.round, step: m.step, seq: m.seq, body })
        }
        other => other,
    }
}

/// Reads a standalone tensor block, returning it and the bytes consumed.
pub fn decode_tensor_block<T: Scalar>(bytes: &[u8]) -> Result<(Tensor<T>, usize)> {
    let mut r = Reader { bytes, pos: 0, base: 0 };
    let (dims, data) = decode_block::<T>(&mut r)?;
    let t = if dims.is_empty() {
        if data.len() != 1 {
            return Err(frame_err(0, "rank-0 block must hold one scalar"));
        }
        Tensor::scalar(data[0])
    } else if data.is_empty() {
        Tensor::zeros(dims)
    } else {
        Tensor::new(dims, data).map_err(|e| frame_err(0, format!("{e}")))?
    };
    Ok((t, r.pos))
}
