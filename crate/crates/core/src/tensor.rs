//! Dense row-major tensors of rank 1 to 4 and their observation masks.

use std::fmt;

use crate::error::{Error, Result};

/// Highest tensor rank the engine handles.
pub const MAX_RANK: usize = 4;

/// Dimensions of a tensor, last dimension fastest.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::InvalidShape(format!(
                "rank must be between 1 and {MAX_RANK}, got {}",
                dims.len()
            )));
        }
        if let Some(i) = dims.iter().position(|&m| m == 0) {
            return Err(Error::InvalidShape(format!("dimension {i} is zero")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::InvalidShape("element count overflows".into()))?;
        Ok(Self(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major element strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.0.len());
        coords.iter().zip(self.strides()).map(|(&c, s)| c * s).sum()
    }

    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.0.len()];
        for (slot, stride) in out.iter_mut().zip(self.strides()) {
            *slot = flat / stride;
            flat %= stride;
        }
        out
    }

    /// `ShapeMismatch` unless `other` equals `self`.
    pub fn ensure_eq(&self, other: &TensorShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: self.0.clone(),
                found: other.0.clone(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// A real-valued data cube, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let data = vec![0.0; shape.len()];
        Self { shape, data }
    }

    pub fn from_fn(shape: TensorShape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let data = (0..shape.len()).map(|i| f(&shape.coords(i))).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.data[self.shape.flat_index(coords)]
    }

    /// Copy with every unobserved element replaced by zero.
    pub fn masked(&self, mask: &SampleMask) -> Result<Tensor> {
        self.shape.ensure_eq(mask.shape())?;
        let data = self
            .data
            .iter()
            .zip(mask.observed())
            .map(|(&v, &o)| if o { v } else { 0.0 })
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Which elements of a tensor were measured.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMask {
    shape: TensorShape,
    observed: Vec<bool>,
}

impl SampleMask {
    pub fn new(shape: TensorShape, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "mask of shape {shape} needs {} flags, got {}",
                shape.len(),
                observed.len()
            )));
        }
        Ok(Self { shape, observed })
    }

    pub fn full(shape: TensorShape) -> Self {
        let observed = vec![true; shape.len()];
        Self { shape, observed }
    }

    pub fn empty(shape: TensorShape) -> Self {
        let observed = vec![false; shape.len()];
        Self { shape, observed }
    }

    /// Builds a mask observing exactly the listed flat indices.
    pub fn from_indices(shape: TensorShape, indices: &[usize]) -> Result<Self> {
        let mut observed = vec![false; shape.len()];
        for &i in indices {
            let slot = observed.get_mut(i).ok_or_else(|| {
                Error::Sampler(format!("index {i} out of bounds for shape {shape}"))
            })?;
            if *slot {
                return Err(Error::Sampler(format!("duplicate index {i}")));
            }
            *slot = true;
        }
        Ok(Self { shape, observed })
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, flat: usize) -> bool {
        self.observed[flat]
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Fraction of observed elements.
    pub fn ratio(&self) -> f64 {
        self.count() as f64 / self.observed.len() as f64
    }
}

/// Affine map applied by [`normalize`]; `original = normalized * scale + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Normalization {
    pub fn invert(&self, t: &Tensor) -> Tensor {
        let data = t
            .data
            .iter()
            .map(|v| v * self.scale + self.offset)
            .collect();
        Tensor {
            shape: t.shape.clone(),
            data,
        }
    }
}

/// Maps a tensor affinely onto [0, 1].
///
/// Data already inside [0, 1] is left untouched (scale 1, offset 0). A
/// constant tensor maps to all zeros with scale 1.
pub fn normalize(t: &Tensor) -> Result<(Tensor, Normalization)> {
    let norm = Normalization::fit(t.data.iter().copied())?;
    Ok((norm.apply(t), norm))
}

/// Like [`normalize`], but the range is taken from observed elements only,
/// so unobserved values cannot influence the result.
pub fn normalize_observed(t: &Tensor, mask: &SampleMask) -> Result<(Tensor, Normalization)> {
    t.shape.ensure_eq(&mask.shape)?;
    let seen = t
        .data
        .iter()
        .zip(&mask.observed)
        .filter(|(_, &o)| o)
        .map(|(&v, _)| v);
    let norm = Normalization::fit(seen)?;
    Ok((norm.apply(t), norm))
}

impl Normalization {
    fn fit(values: impl Iterator<Item = f64>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(if lo > hi || (lo >= 0.0 && hi <= 1.0 && lo < hi) {
            Normalization {
                scale: 1.0,
                offset: 0.0,
            }
        } else if hi > lo {
            Normalization {
                scale: hi - lo,
                offset: lo,
            }
        } else {
            Normalization {
                scale: 1.0,
                offset: lo,
            }
        })
    }

    /// Forward map `(v − offset) / scale`.
    pub fn apply(&self, t: &Tensor) -> Tensor {
        let data = t
            .data
            .iter()
            .map(|&v| (v - self.offset) / self.scale)
            .collect();
        Tensor {
            shape: t.shape.clone(),
            data,
        }
    }
}

/// Overwrites reconstructed values with measurements at observed elements.
pub fn apply_data_consistency(
    recon: &Tensor,
    original: &Tensor,
    mask: &SampleMask,
    enabled: bool,
) -> Result<Tensor> {
    recon.shape.ensure_eq(&original.shape)?;
    recon.shape.ensure_eq(&mask.shape)?;
    if !enabled {
        return Ok(recon.clone());
    }
    let data = recon
        .data
        .iter()
        .zip(&original.data)
        .zip(&mask.observed)
        .map(|((&r, &o), &seen)| if seen { o } else { r })
        .collect();
    Ok(Tensor {
        shape: recon.shape.clone(),
        data,
    })
}
