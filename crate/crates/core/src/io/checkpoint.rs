//! LVCK: model checkpoints.
//!
//! ```text
//! "LVCK" | version: u32 | config_len: u32 | config (JSON)
//!        | n_tensors: u32 | n_tensors × (name_len: u32 | name | ndim: u32 | dims | f32 data)
//!        | checksum: u64
//! ```
//!
//! The checksum is 64-bit FNV-1a over every tensor's data bytes in file
//! order. Weights are held at f32 precision, so the round trip is exact.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::Reader;
use crate::autograd::Mat;
use crate::error::{Error, Result};
use crate::model::{ControlDiT, ModelConfig};

pub const MAGIC: &[u8; 4] = b"LVCK";
pub const VERSION: u32 = 1;

pub fn encode(model: &ControlDiT) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())?;
    let named = model.weights().named();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    let mut hash = FnvHasher::default();
    for (name, _, m) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(m.rows as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols as u32).to_le_bytes());
        for &v in &m.data {
            let f = v as f32;
            if f as f64 != v {
                return Err(Error::invalid(format!(
                    "{name} holds a value not representable as f32: {v}"
                )));
            }
            let b = f.to_le_bytes();
            hash.write(&b);
            out.extend_from_slice(&b);
        }
    }
    out.extend_from_slice(&hash.finish().to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ControlDiT> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"LVCK\""));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let len = r.u32("config length")? as usize;
    let at = r.offset();
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| Error::format(at, format!("bad model config: {e}")))?;
    config.validate()?;
    let n = r.u32("tensor count")? as usize;
    let mut hash = FnvHasher::default();
    let mut tensors = BTreeMap::new();
    for _ in 0..n {
        let at = r.offset();
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?
            .to_string();
        let at = r.offset();
        if r.u32("ndim")? != 2 {
            return Err(Error::format(at, format!("{name}: expected a 2-D tensor")));
        }
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let data = r.take(
            rows.checked_mul(cols)
                .and_then(|c| c.checked_mul(4))
                .ok_or_else(|| Error::format(at, "tensor too large"))?,
            "tensor data",
        )?;
        hash.write(data);
        let values = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if tensors
            .insert(name.clone(), Mat::from_vec(rows, cols, values))
            .is_some()
        {
            return Err(Error::format(at, format!("duplicate tensor {name}")));
        }
    }
    let at = r.offset();
    let stored = r.u64("checksum")?;
    r.finish()?;
    if stored != hash.finish() {
        return Err(Error::format(at, "checksum mismatch"));
    }

    let template = ControlDiT::new(config.clone(), 0)?;
    let mut problem = None;
    let weights = template.weights().map(|name, _, m| match tensors.remove(name) {
        Some(t) if t.shape() == m.shape() => t,
        found => {
            problem.get_or_insert_with(|| match found {
                Some(t) => format!("{name} has shape {:?}, expected {:?}", t.shape(), m.shape()),
                None => format!("missing tensor {name}"),
            });
            m.clone()
        }
    });
    if let Some(p) = problem {
        return Err(Error::format(at, p));
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::format(at, format!("unexpected tensor {extra}")));
    }
    ControlDiT::from_weights(config, weights)
}

pub fn save(path: &Path, model: &ControlDiT) -> Result<()> {
    super::write_bytes(path, &encode(model)?)
}

pub fn load(path: &Path) -> Result<ControlDiT> {
    decode(&super::read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> ModelConfig {
        ModelConfig {
            token_dim: 4,
            n_base_blocks: 2,
            n_control_blocks: 1,
            latent_shape: [2, 1, 4, 4],
            patch: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_and_corruption() {
        let m = ControlDiT::new(micro(), 8).unwrap();
        let bytes = encode(&m).unwrap();
        assert_eq!(decode(&bytes).unwrap(), m);
        let mut bad = bytes.clone();
        let mid = bytes.len() - 20;
        bad[mid] ^= 1;
        assert!(matches!(decode(&bad), Err(Error::Format { .. })));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
