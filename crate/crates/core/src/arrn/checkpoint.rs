//! "ARNN1" checkpoints: a magic line, a little-endian `u32` manifest length,
//! a TOML manifest and the raw little-endian parameter blob in manifest order.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ArrnModel, ModelConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::HasParameters;
use crate::real::{DType, Real};

pub const MAGIC: &[u8] = b"ARNN1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub dtype: DType,
    pub config: ModelConfig,
    /// Free-form metadata, e.g. the dataset and training settings.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub extra: toml::Table,
    pub params: Vec<ParamEntry>,
}

pub fn encode_checkpoint<T: Real>(model: &ArrnModel<T>, extra: &toml::Table) -> Result<Vec<u8>> {
    let mut named = Vec::new();
    model.collect_parameters("", &mut named);
    let info = CheckpointInfo {
        dtype: T::DTYPE,
        config: model.config().clone(),
        extra: extra.clone(),
        params: named.iter().map(|(n, p)| ParamEntry { name: n.clone(), shape: p.shape().to_vec() }).collect(),
    };
    let manifest = toml::to_string(&info).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    for (_, p) in &named {
        for &v in &p.value {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

fn split(bytes: &[u8]) -> Result<(CheckpointInfo, &[u8])> {
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| Error::Format("not an ARNN1 checkpoint".into()))?;
    if rest.len() < 4 {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let len = u32::from_le_bytes(rest[..4].try_into().expect("four bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < len {
        return Err(Error::Format("truncated checkpoint manifest".into()));
    }
    let text = std::str::from_utf8(&rest[..len]).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
    let info: CheckpointInfo = toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    Ok((info, &rest[len..]))
}

/// Manifest only.
pub fn peek_checkpoint(bytes: &[u8]) -> Result<CheckpointInfo> {
    Ok(split(bytes)?.0)
}

/// Rebuilds the model, converting the stored width to `T`.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(ArrnModel<T>, CheckpointInfo)> {
    let (info, blob) = split(bytes)?;
    let mut model = ArrnModel::<T>::new(info.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    let names: Vec<(String, Vec<usize>)> = {
        let mut named = Vec::new();
        model.collect_parameters("", &mut named);
        named.iter().map(|(n, p)| (n.clone(), p.shape().to_vec())).collect()
    };
    if names.len() != info.params.len()
        || names.iter().zip(&info.params).any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(Error::Format("parameter list does not match the configured architecture".into()));
    }
    let width = info.dtype.size();
    let total: usize = info.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if blob.len() != total * width {
        return Err(Error::Format(format!("parameter blob holds {} bytes, expected {}", blob.len(), total * width)));
    }
    let mut params = Vec::new();
    model.collect_parameters_mut(&mut params);
    let mut chunks = blob.chunks_exact(width);
    for p in params {
        for v in p.value.iter_mut() {
            let raw = chunks.next().expect("length checked");
            *v = match info.dtype {
                DType::F32 => T::of(f32::read_le(raw) as f64),
                DType::F64 => T::of(f64::read_le(raw)),
            };
        }
    }
    Ok((model, info))
}

pub fn write_checkpoint<T: Real>(path: &Path, model: &ArrnModel<T>, extra: &toml::Table) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model, extra)?)
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<(ArrnModel<T>, CheckpointInfo)> {
    decode_checkpoint(&std::fs::read(path)?)
}
