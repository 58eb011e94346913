//! File formats: 8-bit PGM images, `SATF` tensors, `SADF` dictionaries and
//! the benchmark CSV.
//!
//! Binary formats are little-endian with float32 payloads; values are held as
//! f64 in memory.

mod bench_csv;
mod dict_file;
mod pgm;
mod tensor_file;

pub use bench_csv::{read_bench_csv, write_bench_csv, BenchRow, BENCH_COLUMNS};
pub use dict_file::{decode_dict, encode_dict, read_dict, write_dict, DICT_MAGIC, DICT_VERSION};
pub use pgm::{decode_pgm, encode_pgm, read_image, write_image};
pub use tensor_file::{
    decode_tensor, encode_tensor, read_tensor, write_tensor, Dtype, TENSOR_MAGIC, TENSOR_VERSION,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a PGM or SATF file, chosen by its leading magic bytes.
pub fn read_any(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        decode_tensor(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes a 2D tensor as PGM when the path ends in `.pgm`, otherwise as a
/// float32 SATF tensor.
pub fn write_any(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        write_image(path, t)
    } else {
        write_tensor(path, t, Dtype::F32)
    }
}

/// Little-endian reader over a byte slice.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("size mismatch: file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Float32 values, exactly `count` of them.
    fn f32s(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("size mismatch: payload too large".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!(
                "size mismatch: {} trailing byte(s)",
                self.remaining()
            )));
        }
        Ok(())
    }
}

/// Reads `ndims` followed by that many positive u32 dimensions.
fn read_dims(r: &mut Reader<'_>) -> Result<Vec<usize>> {
    let ndims = r.u32()? as usize;
    if !(1..=crate::tensor::MAX_RANK).contains(&ndims) {
        return Err(Error::Format(format!("unsupported rank {ndims}")));
    }
    let dims = (0..ndims)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(Error::Format("zero-length dimension".into()));
    }
    Ok(dims)
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}
