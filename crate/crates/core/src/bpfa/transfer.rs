use super::Dictionary;
use crate::error::{Error, Result};

/// Adapts a dictionary to a destination patch shape.
///
/// Equal shapes copy the dictionary unchanged. A destination shape that
/// extends the source shape with trailing dimensions (e.g. `(10,10)` onto
/// `(10,10,3)` colour patches) replicates every source atom across each
/// slice of the extra dimensions and scales by `1/√(slices)`, which keeps each
/// atom's Euclidean norm. Usage probabilities carry over.
pub fn transfer_dictionary(src: &Dictionary, dst_patch_shape: &[usize]) -> Result<Dictionary> {
    let src_shape = src.patch_shape();
    if dst_patch_shape == src_shape {
        return Ok(src.clone());
    }
    let compatible = dst_patch_shape.len() > src_shape.len()
        && dst_patch_shape[..src_shape.len()] == *src_shape
        && !dst_patch_shape.contains(&0);
    if !compatible {
        return Err(Error::IncompatibleDictionary(format!(
            "cannot transfer {src_shape:?} atoms to patch shape {dst_patch_shape:?}"
        )));
    }
    let slices: usize = dst_patch_shape[src_shape.len()..].iter().product();
    let scale = 1.0 / (slices as f64).sqrt();
    let atoms = src
        .atoms()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v * scale, slices))
        .collect();
    Dictionary::new(dst_patch_shape.to_vec(), atoms, src.pi().to_vec())
}
