//! Parameters of every full conditional in the sweep.
//!
//! These are the only places the posterior formulas live; the sampler calls
//! them and [`conditionals`] exposes them for the current state without
//! sampling anything.

use super::sampler::{atom_sums, residual, site_stats, ActiveSets};
use super::{GibbsState, Hyperparams, PRECISION_FLOOR};
use crate::error::Result;
use crate::patches::PatchMatrix;

/// Precision λ and mean μ of one atom element.
///
/// `sum_w2` is Σ z s² and `sum_w_resid` is Σ z s R⁽⁻ᵏ⁾ over the patches that
/// observe this element.
pub fn atom_element_posterior(
    patch_len: usize,
    gamma_eps: f64,
    sum_w2: f64,
    sum_w_resid: f64,
) -> (f64, f64) {
    let precision = (patch_len as f64 + gamma_eps * sum_w2).max(PRECISION_FLOOR);
    (precision, gamma_eps * sum_w_resid / precision)
}

/// Log-odds of `z_ik = 1` at the current weight `s`.
///
/// `energy` is Σ_{Ω_i} d_kp² and `corr` is Σ_{Ω_i} d_kp R⁽⁻ᵏ⁾_ip.
pub fn usage_log_odds(pi: f64, gamma_eps: f64, s: f64, energy: f64, corr: f64) -> f64 {
    pi.ln() - (-pi).ln_1p() - 0.5 * gamma_eps * (s * s * energy - 2.0 * s * corr)
}

/// Mean and precision α of `s_ik` given `z_ik = 1`.
pub fn weight_posterior(gamma_s: f64, gamma_eps: f64, energy: f64, corr: f64) -> (f64, f64) {
    let precision = (gamma_s + gamma_eps * energy).max(PRECISION_FLOOR);
    (gamma_eps * corr / precision, precision)
}

/// Beta parameters for π_k given `used` of `patches` patches use atom k.
pub fn usage_probability_posterior(hp: &Hyperparams, patches: usize, used: usize) -> (f64, f64) {
    let k = hp.atoms as f64;
    let alpha = hp.a / k + used as f64;
    let beta = hp.b * (k - 1.0) / k + (patches - used) as f64;
    (alpha.max(PRECISION_FLOOR), beta.max(PRECISION_FLOOR))
}

/// Gamma shape and rate for γ_s.
pub fn weight_precision_posterior(
    hp: &Hyperparams,
    patches: usize,
    atoms: usize,
    sum_s2: f64,
) -> (f64, f64) {
    (hp.c + 0.5 * (patches * atoms) as f64, hp.d + 0.5 * sum_s2)
}

/// Gamma shape and rate for γ_ε.
pub fn noise_precision_posterior(hp: &Hyperparams, observed: usize, sse: f64) -> (f64, f64) {
    (hp.e + 0.5 * observed as f64, hp.f + 0.5 * sse)
}

/// Every conditional parameter evaluated at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditionals {
    /// λ_kp, K×P.
    pub atom_precision: Vec<f64>,
    /// μ_kp, K×P.
    pub atom_mean: Vec<f64>,
    /// log ρ_ik at the current s_ik, N×K.
    pub log_odds: Vec<f64>,
    /// Posterior mean of s_ik given z_ik = 1, N×K.
    pub weight_mean: Vec<f64>,
    /// α_ik, N×K.
    pub weight_precision: Vec<f64>,
    /// Beta (α, β) per atom.
    pub usage_beta: Vec<(f64, f64)>,
    /// Gamma (shape, rate) of γ_s.
    pub gamma_s: (f64, f64),
    /// Gamma (shape, rate) of γ_ε.
    pub gamma_eps: (f64, f64),
}

/// Evaluates all conditionals at `state` without changing it.
///
/// Each block is computed as the sweep would see it if it were the next step
/// to run, all from the same state.
pub fn conditionals(
    state: &GibbsState,
    pm: &PatchMatrix,
    hp: &Hyperparams,
) -> Result<Conditionals> {
    let n = pm.len();
    let p = pm.patch_len();
    state.check_dims(n, p)?;
    let k_atoms = state.dict.len();
    let resid = residual(state, pm);

    let mut atom_precision = Vec::with_capacity(k_atoms * p);
    let mut atom_mean = Vec::with_capacity(k_atoms * p);
    let active = ActiveSets::new(&state.code);
    for k in 0..k_atoms {
        let (num, den) = atom_sums(state, pm, &resid, k, &active);
        for (&nu, &de) in num.iter().zip(&den) {
            let (lambda, mu) = atom_element_posterior(p, state.gamma_eps, de, nu);
            atom_precision.push(lambda);
            atom_mean.push(mu);
        }
    }

    let mut log_odds = Vec::with_capacity(n * k_atoms);
    let mut weight_mean = Vec::with_capacity(n * k_atoms);
    let mut weight_precision = Vec::with_capacity(n * k_atoms);
    let row_ptr = pm.row_ptr();
    for i in 0..n {
        let offsets = pm.observed_offsets(i);
        let r = &resid[row_ptr[i]..row_ptr[i + 1]];
        for k in 0..k_atoms {
            let j = i * k_atoms + k;
            let s = state.code.s[j];
            let (energy, corr) = site_stats(state.dict.atom(k), offsets, r, state.code.z[j], s);
            log_odds.push(usage_log_odds(
                state.dict.pi()[k],
                state.gamma_eps,
                s,
                energy,
                corr,
            ));
            let (mean, alpha) = weight_posterior(state.gamma_s, state.gamma_eps, energy, corr);
            weight_mean.push(mean);
            weight_precision.push(alpha);
        }
    }

    let usage_beta = (0..k_atoms)
        .map(|k| usage_probability_posterior(hp, n, state.code.usage(k)))
        .collect();
    let sum_s2: f64 = state.code.s.iter().map(|s| s * s).sum();
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    Ok(Conditionals {
        atom_precision,
        atom_mean,
        log_odds,
        weight_mean,
        weight_precision,
        usage_beta,
        gamma_s: weight_precision_posterior(hp, n, k_atoms, sum_s2),
        gamma_eps: noise_precision_posterior(hp, pm.total_observed(), sse),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_update_substitution() {
        let hp = Hyperparams::default().with_atoms(4);
        assert_eq!(usage_probability_posterior(&hp, 10, 3), (3.25, 7.75));
    }

    #[test]
    fn zero_residual_noise_posterior() {
        let hp = Hyperparams::default();
        let (shape, rate) = noise_precision_posterior(&hp, 40, 0.0);
        assert_eq!(shape, hp.e + 20.0);
        assert_eq!(rate, hp.f);
    }

    #[test]
    fn hand_evaluated_log_odds() {
        // Σd² = 1, s = 1, π = 0.5, γ_ε = 100, x = d so R⁽⁻ᵏ⁾ = d and Σ d R = 1.
        let lo = usage_log_odds(0.5, 100.0, 1.0, 1.0, 1.0);
        assert!((lo - 50.0).abs() < 1e-12);
        let one_minus_p = 1.0 / (1.0 + lo.exp());
        assert!(one_minus_p < 1e-21);
    }

    #[test]
    fn precision_floor() {
        assert_eq!(weight_posterior(0.0, 0.0, 0.0, 0.0).1, PRECISION_FLOOR);
        assert_eq!(
            usage_probability_posterior(&Hyperparams::default().with_atoms(1), 1, 1).1,
            PRECISION_FLOOR
        );
    }
}
