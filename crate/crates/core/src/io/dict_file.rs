//! `SADF` dictionary files.
//!
//! ```text
//! "SADF" | version u32 = 1 | K u32 | ndims u32 | B u32 × ndims | flags u32
//!        | atoms float32 × K·∏B | [π float32 × K]
//! ```
//!
//! Flag bit 0 marks the presence of π; all other bits must be clear. Files
//! without π load with π_k = 0.5.

use std::path::Path;

use super::{push_f32s, push_u32, read_dims, Reader};
use crate::bpfa::Dictionary;
use crate::error::{Error, Result};

pub const DICT_MAGIC: &[u8; 4] = b"SADF";
pub const DICT_VERSION: u32 = 1;
const FLAG_PI: u32 = 1;

pub fn decode_dict(bytes: &[u8]) -> Result<Dictionary> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(DICT_MAGIC.as_slice()) {
        return Err(Error::Format("bad magic: not a SADF dictionary".into()));
    }
    let version = r.u32()?;
    if version != DICT_VERSION {
        return Err(Error::Format(format!("unknown version {version}")));
    }
    let k = r.u32()? as usize;
    if k == 0 {
        return Err(Error::Format("dictionary has no atoms".into()));
    }
    let dims = read_dims(&mut r)?;
    let flags = r.u32()?;
    if flags & !FLAG_PI != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let p = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("size mismatch: patch too large".into()))?;
    let count = k
        .checked_mul(p)
        .ok_or_else(|| Error::Format("size mismatch: payload too large".into()))?;
    let atoms = r.f32s(count)?;
    let pi = if flags & FLAG_PI != 0 {
        r.f32s(k)?
    } else {
        vec![0.5; k]
    };
    r.finish()?;
    Dictionary::new(dims, atoms, pi).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_dict(dict: &Dictionary) -> Result<Vec<u8>> {
    let shape = dict.patch_shape();
    let mut out = Vec::with_capacity(24 + 4 * shape.len() + 4 * (dict.atoms().len() + dict.len()));
    out.extend_from_slice(DICT_MAGIC);
    out.extend_from_slice(&DICT_VERSION.to_le_bytes());
    push_u32(&mut out, dict.len())?;
    push_u32(&mut out, shape.len())?;
    for &b in shape {
        push_u32(&mut out, b)?;
    }
    out.extend_from_slice(&FLAG_PI.to_le_bytes());
    push_f32s(&mut out, dict.atoms());
    push_f32s(&mut out, dict.pi());
    Ok(out)
}

pub fn read_dict(path: impl AsRef<Path>) -> Result<Dictionary> {
    decode_dict(&std::fs::read(path)?)
}

pub fn write_dict(path: impl AsRef<Path>, dict: &Dictionary) -> Result<()> {
    std::fs::write(path, encode_dict(dict)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dictionary {
        Dictionary::new(
            vec![2, 2],
            vec![0.5, -0.25, 1.0, 0.0, 2.0, 3.0, -1.0, 0.125],
            vec![0.25, 0.75],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip() {
        let d = sample();
        let bytes = encode_dict(&d).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 4 + 32 + 8);
        assert_eq!(decode_dict(&bytes).unwrap(), d);
    }

    #[test]
    fn truncated_by_one_byte() {
        let bytes = encode_dict(&sample()).unwrap();
        let err = decode_dict(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_dict(&sample()).unwrap();
        bytes[3] = b'X';
        assert!(decode_dict(&bytes)
            .unwrap_err()
            .to_string()
            .contains("magic"));
    }

    #[test]
    fn without_pi() {
        let d = sample();
        let mut bytes = encode_dict(&d).unwrap();
        bytes.truncate(bytes.len() - 8);
        let flags_at = 4 + 4 + 4 + 4 + 8;
        bytes[flags_at] = 0;
        let back = decode_dict(&bytes).unwrap();
        assert_eq!(back.atoms(), d.atoms());
        assert_eq!(back.pi(), &[0.5, 0.5]);
    }
}
