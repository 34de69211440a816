//! Checkpoint file: an 8-byte magic, a little-endian `u32` version, a
//! `u64` header length, a JSON header (config and tensor names and shapes)
//! and a flat `f32` payload holding every parameter tensor followed by the
//! running mean and variance of every batch-norm layer.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ParamInfo, Real, UNet};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ECHOSEGM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamInfo>,
    norm_widths: Vec<usize>,
    /// Free-form provenance such as the training cycle.
    meta: serde_json::Value,
}

pub fn save_checkpoint<T: Real>(model: &UNet<T>, meta: serde_json::Value, path: &Path) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        params: model.info.clone(),
        norm_widths: model.running.iter().map(|(m, _)| m.len()).collect(),
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Structure(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    let tensors = model.params.iter().chain(model.running.iter().flat_map(|(m, v)| [m, v]));
    for t in tensors {
        for &x in t {
            buf.extend_from_slice(&x.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint with its provenance metadata.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(UNet<T>, serde_json::Value)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Structure(format!("{} is not a model checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Structure(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(20..20 + hlen)
        .ok_or_else(|| Error::Structure("truncated checkpoint header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::Structure(e.to_string()))?;
    let payload = &bytes[20 + hlen..];
    let mut values = payload
        .chunks_exact(4)
        .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))).unwrap_or(T::zero()));
    let expected: usize =
        header.params.iter().map(ParamInfo::len).sum::<usize>() + 2 * header.norm_widths.iter().sum::<usize>();
    if payload.len() != 4 * expected {
        return Err(Error::Structure(format!(
            "checkpoint payload holds {} bytes, expected {}",
            payload.len(),
            4 * expected
        )));
    }
    let params = header.params.iter().map(|p| values.by_ref().take(p.len()).collect()).collect();
    let running = header
        .norm_widths
        .iter()
        .map(|&c| (values.by_ref().take(c).collect(), values.by_ref().take(c).collect()))
        .collect();
    let model = UNet::from_parts(header.config, params, running)?;
    if model.info != header.params {
        return Err(Error::Structure("checkpoint layout does not match its config".into()));
    }
    Ok((model, header.meta))
}
