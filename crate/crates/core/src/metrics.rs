//! Image-quality and model statistics reported per frame.

use std::fmt;

use crate::bpfa::GibbsState;
use crate::error::Result;
use crate::tensor::Tensor;

/// Peak used for PSNR on normalized data.
pub const UNIT_PEAK: f64 = 1.0;

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.shape().ensure_eq(b.shape())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the tensors match.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Writes a dB value, using `inf` for the exact-match sentinel.
pub struct Db(pub f64);

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else if let Some(prec) = f.precision() {
            write!(f, "{:.*}", prec, self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Snapshot of the sampler's latent statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelStats {
    /// Mean number of active atoms per patch.
    pub atoms_per_patch: f64,
    pub pi: Vec<f64>,
    pub gamma_s: f64,
    pub gamma_eps: f64,
}

pub fn model_stats(state: &GibbsState) -> ModelStats {
    let n = state.code.patches();
    let active = state.code.z.iter().filter(|&&z| z).count();
    ModelStats {
        atoms_per_patch: if n == 0 {
            0.0
        } else {
            active as f64 / n as f64
        },
        pi: state.dict.pi().to_vec(),
        gamma_s: state.gamma_s,
        gamma_eps: state.gamma_eps,
    }
}

/// Everything reported for one processed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame_id: u64,
    /// Against the reference frame, when one is available.
    pub psnr_db: Option<f64>,
    pub mse: Option<f64>,
    pub sampling_ratio: f64,
    pub atoms_per_patch: f64,
    pub pi_histogram: Vec<f64>,
    /// Mean wall time per sweep.
    pub epoch_time_ms: f64,
    pub epochs_run: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpfa::{Dictionary, SparseCode};
    use crate::tensor::TensorShape;

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::new(TensorShape::new(&[v.len()]).unwrap(), v).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = t(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);

        let b = t(a.data().iter().map(|v| v + 0.1).collect());
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);

        let c = t(vec![0.3, 0.4, 0.3, 0.4]);
        let expected = 10.0 * (1.0f64 / 0.02).log10();
        assert!((psnr(&a, &c, 1.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 16.9897).abs() < 1e-4);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&t(vec![0.0]), &t(vec![0.0, 1.0]), 1.0).is_err());
    }

    #[test]
    fn db_display() {
        assert_eq!(Db(f64::INFINITY).to_string(), "inf");
        assert_eq!(format!("{:.2}", Db(20.0)), "20.00");
    }

    fn state_with(z: Vec<bool>, k: usize) -> GibbsState {
        let n = z.len() / k;
        let mut code = SparseCode::zeros(n, k);
        code.z = z;
        GibbsState {
            dict: Dictionary::new(vec![1], vec![0.0; k], vec![0.5; k]).unwrap(),
            code,
            gamma_s: 1.0,
            gamma_eps: 2.0,
            epoch: 0,
            seed: 0,
        }
    }

    #[test]
    fn atoms_per_patch() {
        assert_eq!(
            model_stats(&state_with(vec![false; 6], 3)).atoms_per_patch,
            0.0
        );
        assert_eq!(
            model_stats(&state_with(vec![true; 128], 64)).atoms_per_patch,
            64.0
        );
        let st = state_with(vec![true, false, false, false, true, true, true, false], 4);
        let stats = model_stats(&st);
        assert_eq!(stats.atoms_per_patch, 2.0);
        assert_eq!(stats.pi, vec![0.5; 4]);
        assert_eq!(stats.gamma_eps, 2.0);
    }
}
