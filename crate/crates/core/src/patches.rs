//! Patch extraction and overlap-average reconstitution over arbitrary-rank
//! patch shapes.
//!
//! Patches sit on a regular grid of fully in-bounds positions. A dimension
//! whose patch extent equals the tensor extent is *spanning*: it has exactly
//! one grid position and its stride is ignored. Observed values are stored
//! sparsely per patch (offset, value) because the sampler only ever touches
//! measured elements.

use crate::error::{Error, Result};
use crate::tensor::{apply_data_consistency, SampleMask, Tensor, TensorShape};

/// Patch shape and grid stride.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    patch_shape: Vec<usize>,
    stride: Vec<usize>,
}

impl PatchSpec {
    pub fn new(patch_shape: &[usize], stride: &[usize]) -> Result<Self> {
        if patch_shape.is_empty() || patch_shape.len() != stride.len() {
            return Err(Error::InvalidPatch(format!(
                "patch shape {patch_shape:?} and stride {stride:?} must have equal, non-zero rank"
            )));
        }
        if patch_shape.contains(&0) || stride.contains(&0) {
            return Err(Error::InvalidPatch(
                "patch extents and strides must be positive".into(),
            ));
        }
        Ok(Self {
            patch_shape: patch_shape.to_vec(),
            stride: stride.to_vec(),
        })
    }

    /// Unit stride along every dimension.
    pub fn dense(patch_shape: &[usize]) -> Result<Self> {
        Self::new(patch_shape, &vec![1; patch_shape.len()])
    }

    pub fn patch_shape(&self) -> &[usize] {
        &self.patch_shape
    }

    pub fn stride(&self) -> &[usize] {
        &self.stride
    }

    /// Elements per patch.
    pub fn patch_len(&self) -> usize {
        self.patch_shape.iter().product()
    }

    pub fn validate_for(&self, shape: &TensorShape) -> Result<()> {
        if shape.rank() != self.patch_shape.len() {
            return Err(Error::InvalidPatch(format!(
                "patch rank {} does not match tensor rank {}",
                self.patch_shape.len(),
                shape.rank()
            )));
        }
        for (i, (&b, &m)) in self.patch_shape.iter().zip(shape.dims()).enumerate() {
            if b > m {
                return Err(Error::InvalidPatch(format!(
                    "patch extent {b} exceeds tensor extent {m} in dimension {i}"
                )));
            }
        }
        Ok(())
    }

    /// Grid positions along each dimension.
    pub fn grid_counts(&self, shape: &TensorShape) -> Result<Vec<usize>> {
        self.validate_for(shape)?;
        Ok(self
            .patch_shape
            .iter()
            .zip(&self.stride)
            .zip(shape.dims())
            .map(|((&b, &s), &m)| if b == m { 1 } else { (m - b) / s + 1 })
            .collect())
    }

    pub fn patch_count(&self, shape: &TensorShape) -> Result<usize> {
        Ok(self.grid_counts(shape)?.iter().product())
    }

    pub fn is_spanning(&self, shape: &TensorShape, dim: usize) -> bool {
        self.patch_shape[dim] == shape.dims()[dim]
    }
}

/// Precomputed addressing for one (tensor shape, patch spec) pair.
#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    /// Flat tensor offset of every patch element relative to the patch origin.
    pub element_offsets: Vec<usize>,
    /// Flat tensor index of every patch origin, in row-major grid order.
    pub origins: Vec<usize>,
}

impl Geometry {
    pub fn new(shape: &TensorShape, spec: &PatchSpec) -> Result<Self> {
        let counts = spec.grid_counts(shape)?;
        let strides = shape.strides();

        let element_offsets = odometer(spec.patch_shape())
            .map(|idx| idx.iter().zip(&strides).map(|(i, s)| i * s).sum())
            .collect();
        let origins = odometer(&counts)
            .map(|idx| {
                idx.iter()
                    .zip(spec.stride())
                    .zip(&strides)
                    .map(|((g, step), s)| g * step * s)
                    .sum()
            })
            .collect();
        Ok(Self {
            element_offsets,
            origins,
        })
    }
}

/// Row-major enumeration of every index below `extent`.
fn odometer(extent: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = extent.iter().product();
    let mut idx = vec![0; extent.len()];
    (0..total).map(move |n| {
        if n > 0 {
            for d in (0..extent.len()).rev() {
                idx[d] += 1;
                if idx[d] < extent[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        idx.clone()
    })
}

/// All grid patches of a tensor, observed entries only.
///
/// Row `i` holds the observed offsets of patch `i` in ascending order together
/// with their (mean-subtracted) values. Unobserved entries are implicitly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    shape: TensorShape,
    spec: PatchSpec,
    patch_len: usize,
    origins: Vec<usize>,
    row_ptr: Vec<usize>,
    offsets: Vec<u32>,
    values: Vec<f64>,
    means: Vec<f64>,
}

/// Extracts every grid patch of `t`.
///
/// With `mean_subtract` each patch's mean over its observed elements is
/// removed from its observed values and kept in [`PatchMatrix::means`].
/// Values at unobserved elements are never read.
pub fn extract_patches(
    t: &Tensor,
    mask: &SampleMask,
    spec: &PatchSpec,
    mean_subtract: bool,
) -> Result<PatchMatrix> {
    t.shape().ensure_eq(mask.shape())?;
    let geo = Geometry::new(t.shape(), spec)?;
    let n = geo.origins.len();
    let p = spec.patch_len();
    let data = t.data();
    let observed = mask.observed();

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut offsets = Vec::new();
    let mut values = Vec::new();
    let mut means = Vec::with_capacity(n);

    for &origin in &geo.origins {
        let start = values.len();
        for (j, &off) in geo.element_offsets.iter().enumerate() {
            let e = origin + off;
            if observed[e] {
                offsets.push(j as u32);
                values.push(data[e]);
            }
        }
        let row = &mut values[start..];
        let mean = if mean_subtract && !row.is_empty() {
            row.iter().sum::<f64>() / row.len() as f64
        } else {
            0.0
        };
        if mean != 0.0 {
            row.iter_mut().for_each(|v| *v -= mean);
        }
        means.push(mean);
        row_ptr.push(values.len());
    }

    Ok(PatchMatrix {
        shape: t.shape().clone(),
        spec: spec.clone(),
        patch_len: p,
        origins: geo.origins,
        row_ptr,
        offsets,
        values,
        means,
    })
}

impl PatchMatrix {
    /// Number of patches.
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Elements per patch.
    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn source_shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn spec(&self) -> &PatchSpec {
        &self.spec
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Flat tensor index of the first element of patch `i`.
    pub fn origin(&self, i: usize) -> usize {
        self.origins[i]
    }

    pub fn origin_coords(&self, i: usize) -> Vec<usize> {
        self.shape.coords(self.origins[i])
    }

    /// Observed offsets of patch `i`, ascending.
    pub fn observed_offsets(&self, i: usize) -> &[u32] {
        &self.offsets[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Observed values of patch `i`, aligned with [`Self::observed_offsets`].
    pub fn observed_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn observed_count(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Total observed entries over all patches.
    pub fn total_observed(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn all_values(&self) -> &[f64] {
        &self.values
    }

    /// Dense N×P values with zeros at unobserved entries.
    pub fn dense_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * self.patch_len];
        for i in 0..self.len() {
            let row = &mut out[i * self.patch_len..(i + 1) * self.patch_len];
            for (&o, &v) in self.observed_offsets(i).iter().zip(self.observed_values(i)) {
                row[o as usize] = v;
            }
        }
        out
    }

    /// Dense N×P observation flags.
    pub fn dense_observed(&self) -> Vec<bool> {
        let mut out = vec![false; self.len() * self.patch_len];
        for i in 0..self.len() {
            for &o in self.observed_offsets(i) {
                out[i * self.patch_len + o as usize] = true;
            }
        }
        out
    }

    /// Concatenates patch matrices that share a patch length, e.g. patches
    /// drawn from several images of a training corpus.
    pub fn concat(parts: &[PatchMatrix]) -> Result<PatchMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidPatch("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for part in &parts[1..] {
            if part.patch_len != out.patch_len {
                return Err(Error::InvalidPatch(format!(
                    "patch length {} differs from {}",
                    part.patch_len, out.patch_len
                )));
            }
            let base = out.values.len();
            out.origins.extend_from_slice(&part.origins);
            out.row_ptr
                .extend(part.row_ptr[1..].iter().map(|r| r + base));
            out.offsets.extend_from_slice(&part.offsets);
            out.values.extend_from_slice(&part.values);
            out.means.extend_from_slice(&part.means);
        }
        Ok(out)
    }
}

/// Dense N×P patch estimates, excluding patch means.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEstimates {
    patch_len: usize,
    values: Vec<f64>,
}

impl PatchEstimates {
    pub fn new(patch_len: usize, values: Vec<f64>) -> Result<Self> {
        if patch_len == 0 || values.len() % patch_len != 0 {
            return Err(Error::InvalidPatch(format!(
                "{} values do not form rows of length {patch_len}",
                values.len()
            )));
        }
        Ok(Self { patch_len, values })
    }

    pub fn zeros(n: usize, patch_len: usize) -> Self {
        Self {
            patch_len,
            values: vec![0.0; n * patch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.patch_len
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.patch_len..(i + 1) * self.patch_len]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.patch_len..(i + 1) * self.patch_len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// What [`reconstitute`] does with elements no patch covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Leave them at zero and report the count.
    #[default]
    Lenient,
    /// Fail with [`Error::Uncovered`].
    Strict,
}

/// Output of [`reconstitute`].
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstitution {
    pub tensor: Tensor,
    /// Elements covered by no patch (left at zero).
    pub uncovered: usize,
}

/// Assembles patch estimates into a tensor by averaging every estimate that
/// covers an element, with each patch's mean added back.
///
/// Patches are accumulated in index order so the result does not depend on
/// how the estimates were produced.
pub fn reconstitute(
    pm: &PatchMatrix,
    estimates: &PatchEstimates,
    coverage: Coverage,
) -> Result<Reconstitution> {
    if estimates.len() != pm.len() || estimates.patch_len() != pm.patch_len() {
        return Err(Error::InvalidPatch(format!(
            "estimates are {}x{}, patch matrix is {}x{}",
            estimates.len(),
            estimates.patch_len(),
            pm.len(),
            pm.patch_len()
        )));
    }
    let geo = Geometry::new(&pm.shape, &pm.spec)?;
    let mut sum = vec![0.0; pm.shape.len()];
    let mut count = vec![0u32; pm.shape.len()];
    for (i, &origin) in pm.origins.iter().enumerate() {
        let mean = pm.means[i];
        for (&off, &v) in geo.element_offsets.iter().zip(estimates.row(i)) {
            let e = origin + off;
            sum[e] += v + mean;
            count[e] += 1;
        }
    }
    let mut uncovered = 0;
    for (s, &c) in sum.iter_mut().zip(&count) {
        if c == 0 {
            uncovered += 1;
        } else if c > 1 {
            *s /= c as f64;
        }
    }
    if uncovered > 0 && coverage == Coverage::Strict {
        return Err(Error::Uncovered(uncovered));
    }
    Ok(Reconstitution {
        tensor: Tensor::new(pm.shape.clone(), sum)?,
        uncovered,
    })
}

/// Baseline estimate: every unobserved element gets the average observed
/// mean of the patches covering it; observed elements keep their values.
pub fn mean_fill_baseline(t: &Tensor, mask: &SampleMask, spec: &PatchSpec) -> Result<Tensor> {
    let pm = extract_patches(t, mask, spec, true)?;
    let zeros = PatchEstimates::zeros(pm.len(), pm.patch_len());
    let fill = reconstitute(&pm, &zeros, Coverage::Lenient)?.tensor;
    apply_data_consistency(&fill, t, mask, true)
}

/// Number of patches covering each element.
pub fn coverage_map(shape: &TensorShape, spec: &PatchSpec) -> Result<Vec<u32>> {
    let geo = Geometry::new(shape, spec)?;
    let mut count = vec![0u32; shape.len()];
    for &origin in &geo.origins {
        for &off in &geo.element_offsets {
            count[origin + off] += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d).unwrap()
    }

    fn ramp(d: &[usize]) -> Tensor {
        let s = shape(d);
        let n = s.len();
        Tensor::new(s, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn four_by_four_nonoverlapping() {
        let t = ramp(&[4, 4]);
        let mask = SampleMask::full(t.shape().clone());
        let spec = PatchSpec::new(&[2, 2], &[2, 2]).unwrap();
        let pm = extract_patches(&t, &mask, &spec, false).unwrap();
        assert_eq!(pm.len(), 4);
        assert_eq!(pm.patch_len(), 4);
        assert_eq!(pm.observed_values(0), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(pm.observed_values(3), &[10.0, 11.0, 14.0, 15.0]);
        assert!(pm.means().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn spanning_channel_dimension() {
        let t = Tensor::zeros(shape(&[4, 4, 3]));
        let mask = SampleMask::full(t.shape().clone());
        let spec = PatchSpec::new(&[2, 2, 3], &[2, 2, 1]).unwrap();
        let pm = extract_patches(&t, &mask, &spec, false).unwrap();
        assert_eq!(pm.len(), 4);
        assert_eq!(pm.patch_len(), 12);
        assert!(spec.is_spanning(t.shape(), 2));
    }

    #[test]
    fn five_by_five_unit_stride() {
        let spec = PatchSpec::dense(&[2, 2]).unwrap();
        assert_eq!(spec.patch_count(&shape(&[5, 5])).unwrap(), 16);
    }

    #[test]
    fn oversized_patch_rejected() {
        let spec = PatchSpec::dense(&[6, 2]).unwrap();
        assert!(spec.patch_count(&shape(&[5, 5])).is_err());
        let t = Tensor::zeros(shape(&[5, 5]));
        let mask = SampleMask::full(shape(&[5, 5]));
        assert!(extract_patches(&t, &mask, &spec, false).is_err());
        let wrong_mask = SampleMask::full(shape(&[5, 4]));
        let ok_spec = PatchSpec::dense(&[2, 2]).unwrap();
        assert!(extract_patches(&t, &wrong_mask, &ok_spec, false).is_err());
    }

    #[test]
    fn observed_only_mean() {
        let t = Tensor::new(shape(&[2, 2]), vec![1.0, 3.0, 100.0, 5.0]).unwrap();
        let mask = SampleMask::new(t.shape().clone(), vec![true, true, false, true]).unwrap();
        let spec = PatchSpec::dense(&[2, 2]).unwrap();
        let pm = extract_patches(&t, &mask, &spec, true).unwrap();
        assert_eq!(pm.means(), &[3.0]);
        assert_eq!(pm.observed_offsets(0), &[0, 1, 3]);
        assert_eq!(pm.observed_values(0), &[-2.0, 0.0, 2.0]);
        assert_eq!(pm.dense_values(), vec![-2.0, 0.0, 0.0, 2.0]);
        assert_eq!(pm.dense_observed(), vec![true, true, false, true]);
    }

    #[test]
    fn two_unit_patches_average() {
        // A 1-element tensor covered by two 1x1 patches from two "sources".
        let t = Tensor::zeros(shape(&[1]));
        let mask = SampleMask::full(t.shape().clone());
        let spec = PatchSpec::dense(&[1]).unwrap();
        let one = extract_patches(&t, &mask, &spec, false).unwrap();
        let pm = PatchMatrix::concat(&[one.clone(), one]).unwrap();
        let est = PatchEstimates::new(1, vec![0.0, 1.0]).unwrap();
        let out = reconstitute(&pm, &est, Coverage::Strict).unwrap();
        assert_eq!(out.tensor.data(), &[0.5]);
    }

    #[test]
    fn coverage_is_outer_product() {
        // Brute force: count windows containing each element.
        let s = shape(&[5, 5]);
        let spec = PatchSpec::dense(&[2, 2]).unwrap();
        let map = coverage_map(&s, &spec).unwrap();
        let per_axis = [1u32, 2, 2, 2, 1];
        for r in 0..5 {
            for c in 0..5 {
                let brute = (0..4)
                    .flat_map(|a| (0..4).map(move |b| (a, b)))
                    .filter(|&(a, b)| (a..a + 2).contains(&r) && (b..b + 2).contains(&c))
                    .count() as u32;
                assert_eq!(map[r * 5 + c], brute);
                assert_eq!(brute, per_axis[r] * per_axis[c]);
            }
        }
    }

    #[test]
    fn mean_fill_uses_covering_patch_means() {
        let t = Tensor::new(shape(&[1, 3]), vec![1.0, 7.0, 3.0]).unwrap();
        let mask = SampleMask::from_indices(shape(&[1, 3]), &[0, 2]).unwrap();
        let spec = PatchSpec::dense(&[1, 2]).unwrap();
        let fill = mean_fill_baseline(&t, &mask, &spec).unwrap();
        assert_eq!(fill.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn uncovered_margin_reported() {
        let t = ramp(&[5, 5]);
        let mask = SampleMask::full(t.shape().clone());
        let spec = PatchSpec::new(&[2, 2], &[2, 2]).unwrap();
        let pm = extract_patches(&t, &mask, &spec, false).unwrap();
        let est = PatchEstimates::new(4, pm.dense_values()).unwrap();
        let out = reconstitute(&pm, &est, Coverage::Lenient).unwrap();
        assert_eq!(out.uncovered, 9);
        assert_eq!(out.tensor.get(&[4, 4]), 0.0);
        assert_eq!(out.tensor.get(&[3, 3]), 18.0);
        assert!(matches!(
            reconstitute(&pm, &est, Coverage::Strict),
            Err(Error::Uncovered(9))
        ));
    }
}
