//! LVTF: a minimal dense tensor container.
//!
//! ```text
//! "LVTF" | version: u32 | dtype: u8 | ndim: u32 | dims: ndim × u32 | data
//! ```
//!
//! All integers and elements are little-endian; elements are row-major.
//! dtype 0 stores f32, dtype 1 stores f64.

use std::path::Path;

use super::Reader;
use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

pub const MAGIC: &[u8; 4] = b"LVTF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn into_video(self) -> Result<VideoTensor> {
        let dims: [usize; 4] = self
            .dims
            .as_slice()
            .try_into()
            .map_err(|_| Error::invalid(format!("expected a 4-D video tensor, got dims {:?}", self.dims)))?;
        VideoTensor::new(dims, self.data)
    }
}

impl From<&VideoTensor> for Tensor {
    fn from(v: &VideoTensor) -> Self {
        Tensor {
            dims: v.shape().to_vec(),
            data: v.data().to_vec(),
        }
    }
}

pub fn encode(tensor: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    let count: usize = tensor.dims.iter().product();
    if count != tensor.data.len() {
        return Err(Error::invalid(format!(
            "dims {:?} describe {count} elements but {} were given",
            tensor.dims,
            tensor.data.len()
        )));
    }
    let mut out = Vec::with_capacity(13 + 4 * tensor.dims.len() + count * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype as u8);
    out.extend_from_slice(&(tensor.dims.len() as u32).to_le_bytes());
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in &tensor.data {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {:?}, expected \"LVTF\"", String::from_utf8_lossy(magic)),
        ));
    }
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let at = r.offset();
    let dtype = match r.u8("dtype")? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        code => return Err(Error::format(at, format!("unsupported dtype code {code}"))),
    };
    let ndim = r.u32("ndim")? as usize;
    let mut dims = Vec::with_capacity(ndim.min(16));
    for _ in 0..ndim {
        dims.push(r.u32("dimension")? as usize);
    }
    let at = r.offset();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|c| c.checked_mul(dtype.size()))
        .ok_or_else(|| Error::format(at, "declared element count overflows"))?;
    if r.remaining() != count {
        return Err(Error::format(
            at,
            format!(
                "{} payload: dims {dims:?} need {count} bytes, found {}",
                if r.remaining() < count {
                    "truncated"
                } else {
                    "oversized"
                },
                r.remaining()
            ),
        ));
    }
    let payload = r.take(count, "payload")?;
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    r.finish()?;
    Ok(Tensor { dims, data })
}

pub fn write_lvtf(path: &Path, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    super::write_bytes(path, &encode(tensor, dtype)?)
}

pub fn read_lvtf(path: &Path) -> Result<Tensor> {
    decode(&super::read_bytes(path)?)
}

pub fn write_video(path: &Path, video: &VideoTensor, dtype: Dtype) -> Result<()> {
    write_lvtf(path, &Tensor::from(video), dtype)
}

pub fn read_video(path: &Path) -> Result<VideoTensor> {
    read_lvtf(path)?.into_video()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_errors_carry_offsets() {
        let mut bytes = encode(
            &Tensor {
                dims: vec![2, 2],
                data: vec![0.0; 4],
            },
            Dtype::F32,
        )
        .unwrap();
        bytes.truncate(bytes.len() - 4);
        match decode(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 21);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XTFV");
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));
        let mut dtype = bytes;
        dtype[8] = 7;
        assert!(matches!(decode(&dtype), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let t = Tensor {
            dims: vec![3],
            data: vec![0.1, -2.5e-300, 7.0],
        };
        assert_eq!(decode(&encode(&t, Dtype::F64).unwrap()).unwrap(), t);
    }
}
