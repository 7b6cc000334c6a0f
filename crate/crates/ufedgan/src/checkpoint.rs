//! Model checkpoints.
//!
//! `"UFGC"`, version byte, `u64` length of a TOML model spec, the spec, then
//! two tensor blocks: the flattened parameters and the batch-norm running
//! statistics (each layer's means followed by its variances).

use std::path::Path;

use ufedgan_core::nn::{Model, ModelSpec};
use ufedgan_core::transport::{decode_tensor_block, encode_tensor_block};
use ufedgan_core::Tensor;

use crate::error::{read, write, CliError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"UFGC";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let spec = toml::to_string(model.spec()).expect("model specs are representable in TOML");
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    encode_tensor_block(&Tensor::from_vec(model.flatten().into_inner()), &mut out);
    let stats: Vec<f32> = model.running_stats().iter().flat_map(|s| s.mean.iter().chain(&s.var).copied()).collect();
    encode_tensor_block(&Tensor::from_vec(stats), &mut out);
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Model<f32>> {
    let err = |offset: usize, reason: String| CliError::parse(path, offset, reason);
    if bytes.len() < 13 {
        return Err(err(bytes.len(), "truncated header".into()));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(err(0, "bad magic".into()));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(err(4, format!("unsupported version {}", bytes[4])));
    }
    let len = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let end = 13usize.checked_add(len as usize).filter(|&e| e <= bytes.len()).ok_or_else(|| err(5, "spec length exceeds file".into()))?;
    let text = std::str::from_utf8(&bytes[13..end]).map_err(|e| err(13 + e.valid_up_to(), "spec is not UTF-8".into()))?;
    let spec: ModelSpec = toml::from_str(text).map_err(|e| err(13, format!("model spec: {e}")))?;
    let block = |at: usize| {
        decode_tensor_block::<f32>(&bytes[at..]).map_err(|e| match e {
            ufedgan_core::Error::Frame { offset, reason } => err(at + offset, reason),
            other => CliError::Core(other),
        })
    };
    let (params, used) = block(end)?;
    let mut model = Model::from_params(spec, params.data()).map_err(|e| err(end, e.to_string()))?;
    let at = end + used;
    let (stats, used) = block(at)?;
    if at + used != bytes.len() {
        return Err(err(at + used, "trailing bytes".into()));
    }
    let expected: usize = model.running_stats().iter().map(|s| 2 * s.mean.len()).sum();
    if stats.len() != expected {
        return Err(err(at, format!("{} running statistics, model needs {expected}", stats.len())));
    }
    let mut values = stats.data().iter().copied();
    for s in model.running_stats_mut() {
        for v in s.mean.iter_mut().chain(s.var.iter_mut()) {
            *v = values.next().unwrap();
        }
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>) -> Result<()> {
    write(path, encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    decode_checkpoint(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ufedgan_core::nn::{GanSpec, Profile};
    use ufedgan_core::rng::StreamRng;

    #[test]
    fn roundtrip_keeps_weights_and_statistics() {
        let spec = GanSpec::for_profile(Profile::TinyImage16, 1).unwrap();
        let mut g = spec.init::<f32>(&mut StreamRng::new(1, "t")).unwrap().generator;
        g.running_stats_mut()[0].mean[3] = 0.25;
        let bytes = encode_checkpoint(&g);
        assert_eq!(decode_checkpoint(&bytes, Path::new("g")).unwrap(), g);
        for cut in [0, 3, 12, 40, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut], Path::new("g")), Err(CliError::Parse { .. })));
        }
    }
}
