//! Masked, truncated beta-process factor analysis.
//!
//! Each patch is modelled as `x_i = D (z_i ∘ s_i) + ε_i`, seen only on its
//! observed set `Ω_i`:
//!
//! * atoms `d_k ~ N(0, P⁻¹ I)`
//! * usage probabilities `π_k ~ Beta(a/K, b(K−1)/K)`
//! * usage indicators `z_ik ~ Bernoulli(π_k)`
//! * weights `s_ik ~ N(0, γ_s⁻¹)`, noise `ε_i ~ N(0, γ_ε⁻¹ I)`
//! * precisions `γ_s ~ Gamma(c, d)`, `γ_ε ~ Gamma(e, f)` (shape, rate)
//!
//! [`gibbs_epoch`] performs one sweep over all latent variables. Unobserved
//! entries never enter any conditional, so the dictionary is learned directly
//! from subsampled data.

mod conditionals;
mod sampler;
mod transfer;

pub use conditionals::{
    atom_element_posterior, conditionals, noise_precision_posterior, usage_log_odds,
    usage_probability_posterior, weight_posterior, weight_precision_posterior, Conditionals,
};
pub use sampler::{
    estimates, gibbs_epoch, infer, infer_with, init_state, run_epochs, state_from_dictionary,
    EpochReport, EpochStats, InferOptions, Inference, InitMode,
};
pub use transfer::transfer_dictionary;

use crate::error::{Error, Result};

/// Lower bound applied to every sampled or computed precision.
pub const PRECISION_FLOOR: f64 = 1e-12;
/// Sampled usage probabilities are clamped into `[PI_MIN, PI_MAX]`.
pub const PI_MIN: f64 = 1e-12;
pub const PI_MAX: f64 = 1.0 - 1e-6;

/// Prior hyperparameters and truncation level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    /// Truncation level K.
    pub atoms: usize,
    pub a: f64,
    pub b: f64,
    /// Shape and rate of the weight-precision prior.
    pub c: f64,
    pub d: f64,
    /// Shape and rate of the noise-precision prior.
    pub e: f64,
    pub f: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            atoms: 64,
            a: 1.0,
            b: 1.0,
            c: 1e-6,
            d: 1e-6,
            e: 1e-6,
            f: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn with_atoms(self, atoms: usize) -> Self {
        Self { atoms, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms == 0 {
            return Err(Error::Config("at least one atom is required".into()));
        }
        let named = [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("e", self.e),
            ("f", self.f),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "hyperparameter {name} = {v} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// K atoms of a common patch shape plus their usage probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    patch_shape: Vec<usize>,
    atoms: Vec<f64>,
    pi: Vec<f64>,
}

impl Dictionary {
    /// `atoms` is K×P row-major with P = ∏ `patch_shape`.
    pub fn new(patch_shape: Vec<usize>, atoms: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        if patch_shape.is_empty() || patch_shape.contains(&0) {
            return Err(Error::IncompatibleDictionary(format!(
                "invalid patch shape {patch_shape:?}"
            )));
        }
        let p: usize = patch_shape.iter().product();
        let k = pi.len();
        if k == 0 || atoms.len() != k * p {
            return Err(Error::IncompatibleDictionary(format!(
                "{} atom values and {k} probabilities do not fit patch shape {patch_shape:?}",
                atoms.len()
            )));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if pi.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::IncompatibleDictionary(
                "usage probabilities must lie in (0, 1)".into(),
            ));
        }
        Ok(Self {
            patch_shape,
            atoms,
            pi,
        })
    }

    /// Number of atoms K.
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn patch_shape(&self) -> &[usize] {
        &self.patch_shape
    }

    pub fn patch_len(&self) -> usize {
        self.atoms.len() / self.pi.len()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        let p = self.patch_len();
        &self.atoms[k * p..(k + 1) * p]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub(crate) fn atom_mut(&mut self, k: usize) -> &mut [f64] {
        let p = self.patch_len();
        &mut self.atoms[k * p..(k + 1) * p]
    }

    pub(crate) fn pi_mut(&mut self) -> &mut [f64] {
        &mut self.pi
    }

    /// Atom indices ordered by descending usage probability (ties by index).
    pub fn order_by_usage(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.pi[b].total_cmp(&self.pi[a]).then(a.cmp(&b)));
        order
    }
}

/// Binary usage indicators and weights, N×K row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    atoms: usize,
    pub z: Vec<bool>,
    pub s: Vec<f64>,
}

impl SparseCode {
    pub fn zeros(patches: usize, atoms: usize) -> Self {
        Self {
            atoms,
            z: vec![false; patches * atoms],
            s: vec![0.0; patches * atoms],
        }
    }

    pub fn patches(&self) -> usize {
        self.z.len() / self.atoms.max(1)
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    /// Effective weight `z_ik s_ik`.
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        let j = i * self.atoms + k;
        if self.z[j] {
            self.s[j]
        } else {
            0.0
        }
    }

    /// Number of atoms patch `i` uses.
    pub fn active_count(&self, i: usize) -> usize {
        self.z[i * self.atoms..(i + 1) * self.atoms]
            .iter()
            .filter(|&&z| z)
            .count()
    }

    /// Number of patches using atom `k`.
    pub fn usage(&self, k: usize) -> usize {
        self.z
            .iter()
            .skip(k)
            .step_by(self.atoms)
            .filter(|&&z| z)
            .count()
    }
}

/// Full sampler state for one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub dict: Dictionary,
    pub code: SparseCode,
    pub gamma_s: f64,
    pub gamma_eps: f64,
    /// Completed sweeps; also part of every random-stream address.
    pub epoch: u64,
    pub seed: u64,
}

impl GibbsState {
    /// Clears Z and S for a fresh set of `patches`, keeping the dictionary,
    /// usage probabilities and precisions.
    pub fn reset_codes(&mut self, patches: usize) {
        self.code = SparseCode::zeros(patches, self.dict.len());
    }

    pub(crate) fn check_dims(&self, patches: usize, patch_len: usize) -> Result<()> {
        if self.dict.patch_len() != patch_len {
            return Err(Error::IncompatibleDictionary(format!(
                "dictionary patch length {} does not match {patch_len}",
                self.dict.patch_len()
            )));
        }
        if self.code.atoms() != self.dict.len() || self.code.patches() != patches {
            return Err(Error::InvalidShape(format!(
                "sparse code is {}x{}, expected {patches}x{}",
                self.code.patches(),
                self.code.atoms(),
                self.dict.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(Hyperparams::default().with_atoms(0).validate().is_err());
        let bad = Hyperparams {
            e: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dictionary_validation() {
        assert!(Dictionary::new(vec![2], vec![0.0; 4], vec![0.5, 0.5]).is_ok());
        assert!(Dictionary::new(vec![2], vec![0.0; 3], vec![0.5, 0.5]).is_err());
        assert!(Dictionary::new(vec![2], vec![0.0; 4], vec![0.5, 1.0]).is_err());
        assert!(Dictionary::new(vec![2], vec![f64::NAN, 0.0], vec![0.5]).is_err());
    }

    #[test]
    fn usage_order() {
        let d = Dictionary::new(vec![1], vec![0.0; 3], vec![0.2, 0.7, 0.2]).unwrap();
        assert_eq!(d.order_by_usage(), vec![1, 0, 2]);
    }

    #[test]
    fn code_counts() {
        let mut c = SparseCode::zeros(2, 3);
        c.z = vec![true, false, false, true, true, true];
        c.s = vec![2.0, 9.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(c.active_count(0), 1);
        assert_eq!(c.active_count(1), 3);
        assert_eq!(c.usage(0), 2);
        assert_eq!(c.weight(0, 1), 0.0);
        assert_eq!(c.weight(0, 0), 2.0);
    }
}
