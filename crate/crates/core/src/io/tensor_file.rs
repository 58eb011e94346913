//! `SATF` tensor files.
//!
//! ```text
//! "SATF" | version u32 = 1 | ndims u32 | dims u32 × ndims | dtype u32 | payload
//! ```
//!
//! dtype 0 is float32, dtype 1 is uint8 (read back as byte / 255).

use std::path::Path;

use super::{push_f32s, push_u32, read_dims, Reader};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorShape};

pub const TENSOR_MAGIC: &[u8; 4] = b"SATF";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    U8 = 1,
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(TENSOR_MAGIC.as_slice()) {
        return Err(Error::Format("bad magic: not a SATF tensor".into()));
    }
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unknown version {version}")));
    }
    let dims = read_dims(&mut r)?;
    let shape = TensorShape::new(&dims).map_err(|e| Error::Format(e.to_string()))?;
    let data = match r.u32()? {
        0 => r.f32s(shape.len())?,
        1 => r
            .take(shape.len())?
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
        other => return Err(Error::Format(format!("unknown dtype {other}"))),
    };
    r.finish()?;
    Tensor::new(shape, data)
}

pub fn encode_tensor(t: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    let dims = t.shape().dims();
    let mut out = Vec::with_capacity(16 + 4 * dims.len() + 4 * t.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    push_u32(&mut out, dims.len())?;
    for &d in dims {
        push_u32(&mut out, d)?;
    }
    push_u32(&mut out, dtype as usize)?;
    match dtype {
        Dtype::F32 => push_f32s(&mut out, t.data()),
        Dtype::U8 => out.extend(t.data().iter().map(|&v| super::pgm::quantize(v))),
    }
    Ok(out)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&std::fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    std::fs::write(path, encode_tensor(t, dtype)?)?;
    Ok(())
}
