//! Binary 8-bit greyscale PGM (`P5`, maxval 255).
//!
//! The header must be in the canonical layout `P5\n<w> <h>\n255\n`, with
//! optional `#` comment lines after the magic line. Pixel bytes map to [0, 1]
//! by division by 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TensorShape};

pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    match magic {
        b"P5" => {}
        b"P2" => return Err(Error::Format("unsupported PGM variant P2 (ASCII)".into())),
        _ => return Err(Error::Format("bad magic: not a binary PGM".into())),
    }
    let mut pos = 2;
    expect(bytes, &mut pos, b'\n')?;
    while bytes.get(pos) == Some(&b'#') {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated comment".into()))?;
        pos += nl + 1;
    }
    let width = number(bytes, &mut pos)?;
    expect(bytes, &mut pos, b' ')?;
    let height = number(bytes, &mut pos)?;
    expect(bytes, &mut pos, b'\n')?;
    let maxval = number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {maxval} is not supported, need 255"
        )));
    }
    expect(bytes, &mut pos, b'\n')?;

    let shape = TensorShape::new(&[height, width]).map_err(|e| Error::Format(e.to_string()))?;
    let payload = &bytes[pos..];
    if payload.len() != shape.len() {
        return Err(Error::Format(format!(
            "size mismatch: {width}x{height} image needs {} bytes, found {}",
            shape.len(),
            payload.len()
        )));
    }
    Tensor::new(shape, payload.iter().map(|&b| b as f64 / 255.0).collect())
}

fn expect(bytes: &[u8], pos: &mut usize, want: u8) -> Result<()> {
    match bytes.get(*pos) {
        Some(&b) if b == want => {
            *pos += 1;
            Ok(())
        }
        _ => Err(Error::Format(format!(
            "malformed header at byte {}: expected {:?}",
            *pos, want as char
        ))),
    }
}

/// Decimal integer without sign or leading zeros.
fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    let digits = &bytes[start..*pos];
    if digits.is_empty() || (digits.len() > 1 && digits[0] == b'0') || digits.len() > 9 {
        return Err(Error::Format(format!(
            "malformed header number at byte {start}"
        )));
    }
    Ok(digits
        .iter()
        .fold(0, |acc, &d| acc * 10 + (d - b'0') as usize))
}

/// Encodes a 2D tensor; values are clamped to [0, 1] and rounded to 8 bits.
pub fn encode_pgm(t: &Tensor) -> Result<Vec<u8>> {
    let dims = t.shape().dims();
    if dims.len() != 2 {
        return Err(Error::Format(format!(
            "PGM holds 2D images, tensor has shape {}",
            t.shape()
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", dims[1], dims[0]).into_bytes();
    out.extend(t.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub(crate) fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pgm(t)?)?;
    Ok(())
}
