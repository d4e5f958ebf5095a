//! `DOAW` checkpoint files.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{ModelConfig, Net, TransDoaParams};
use crate::array_sim::dataset::Reader;
use crate::autodiff::Tensor;
use crate::{DoaError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DOAW";
const VERSION: u32 = 1;

/// A model with the metadata needed to reproduce it. `run` holds the
/// training or transfer settings that produced the weights.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub seed: u64,
    pub run: serde_json::Value,
    pub params: TransDoaParams,
}

#[derive(Serialize, Deserialize)]
struct Blob {
    model: ModelConfig,
    seed: u64,
    run: serde_json::Value,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let blob = serde_json::to_vec(&Blob { model: ckpt.model, seed: ckpt.seed, run: ckpt.run.clone() })?;
    let named = ckpt.params.named();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    out.extend_from_slice(&blob);
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(buf);
    if r.bytes(4)? != CHECKPOINT_MAGIC {
        return Err(DoaError::Format("not a DOAW checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DoaError::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()? as usize;
    let blob: Blob = serde_json::from_slice(r.bytes(len)?)?;
    blob.model.validate()?;
    let count = r.u32()? as usize;
    let mut names = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(n)?.to_vec()).map_err(|e| DoaError::Format(e.to_string()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let size: usize = shape.iter().product();
        let data = (0..size).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        names.push(name);
        tensors.push(Tensor::new(shape, data)?);
    }
    r.finish()?;
    let params = Net::from_values(blob.model.depth, tensors)
        .ok_or_else(|| DoaError::Format(format!("{count} tensors do not fit depth {}", blob.model.depth)))?;
    let expected: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    if expected != names {
        return Err(DoaError::Format("checkpoint tensor names are out of order".into()));
    }
    if !params.matches(&blob.model) {
        return Err(DoaError::Format("checkpoint tensor shapes do not match its config".into()));
    }
    Ok(Checkpoint { model: blob.model, seed: blob.seed, run: blob.run, params })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OutputMode;

    fn ckpt() -> Checkpoint {
        let model = ModelConfig { embed_dim: 8, depth: 2, heads: 2, mlp_ratio: 2, sources: 3, elements: 5, output: OutputMode::TwoD };
        let mut params = TransDoaParams::init(&model, 4);
        params.head_b.data_mut()[0] = f64::MIN_POSITIVE / 4.0;
        params.head_b.data_mut()[1] = -0.0;
        Checkpoint { model, seed: 4, run: serde_json::json!({"epochs": 3}), params }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = ckpt();
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..4], b"DOAW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = decode_checkpoint(&bytes).unwrap();
        assert!(back.params.bitwise_eq(&c.params));
        assert_eq!(back.model, c.model);
        assert_eq!(back.run, c.run);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_checkpoint(&ckpt()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode_checkpoint(&magic), Err(DoaError::Format(_))));
    }
}
