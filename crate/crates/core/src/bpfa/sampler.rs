//! The Gibbs sweep.
//!
//! The sampler keeps the residual `x_i − D(z_i ∘ s_i)` on observed entries
//! only, aligned with the patch matrix storage, and updates it in place as
//! atoms and codes change. It is rebuilt from scratch at the start of every
//! sweep.
//!
//! Work is split into fixed-size patch chunks. Chunk boundaries do not depend
//! on the number of worker threads, per-patch draws come from per-patch
//! streams, and cross-chunk sums are reduced in chunk order, so a sweep is
//! bit-identical for any thread count.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::conditionals::{
    atom_element_posterior, noise_precision_posterior, usage_log_odds, usage_probability_posterior,
    weight_posterior, weight_precision_posterior,
};
use super::{Dictionary, GibbsState, Hyperparams, SparseCode, PI_MAX, PI_MIN, PRECISION_FLOOR};
use crate::error::{Error, Result};
use crate::patches::{PatchEstimates, PatchMatrix};
use crate::rng::{self, open01, StreamClass};

const CHUNK: usize = 1024;

/// How a fresh state's dictionary is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Atoms drawn from their prior.
    #[default]
    Prior,
    /// Atoms copied from the most-observed patches, unit-normalized.
    Data,
}

/// Builds the starting state: Z all zero, S = 0, γ_s = c/d, γ_ε = e/f and
/// π_k = a/(a+b).
pub fn init_state(
    pm: &PatchMatrix,
    hp: &Hyperparams,
    seed: u64,
    mode: InitMode,
) -> Result<GibbsState> {
    hp.validate()?;
    let n = pm.len();
    let p = pm.patch_len();
    if n == 0 || p == 0 {
        return Err(Error::InvalidShape("no patches to learn from".into()));
    }
    let k_atoms = hp.atoms;
    let mut atoms = vec![0.0; k_atoms * p];
    let mut filled = vec![false; k_atoms];

    if mode == InitMode::Data {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            pm.observed_count(b)
                .cmp(&pm.observed_count(a))
                .then(a.cmp(&b))
        });
        for (k, &i) in order.iter().take(k_atoms).enumerate() {
            let atom = &mut atoms[k * p..(k + 1) * p];
            for (&o, &v) in pm.observed_offsets(i).iter().zip(pm.observed_values(i)) {
                atom[o as usize] = v;
            }
            let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                atom.iter_mut().for_each(|v| *v /= norm);
                filled[k] = true;
            } else {
                atom.fill(0.0);
            }
        }
    }

    let sd = (1.0 / p as f64).sqrt();
    for k in (0..k_atoms).filter(|&k| !filled[k]) {
        let mut rng = rng::stream(seed, 0, StreamClass::Init, k as u64);
        for v in &mut atoms[k * p..(k + 1) * p] {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let pi0 = hp.a / (hp.a + hp.b);
    let dict = Dictionary::new(
        pm.spec().patch_shape().to_vec(),
        atoms,
        vec![pi0.clamp(PI_MIN, PI_MAX); k_atoms],
    )?;
    Ok(GibbsState {
        dict,
        code: SparseCode::zeros(n, k_atoms),
        gamma_s: hp.c / hp.d,
        gamma_eps: hp.e / hp.f,
        epoch: 0,
        seed,
    })
}

/// Starts from a given dictionary and π with Z, S cleared and the
/// precisions at their prior means.
pub fn state_from_dictionary(
    dict: Dictionary,
    patches: usize,
    hp: &Hyperparams,
    seed: u64,
) -> GibbsState {
    let k = dict.len();
    GibbsState {
        dict,
        code: SparseCode::zeros(patches, k),
        gamma_s: hp.c / hp.d,
        gamma_eps: hp.e / hp.f,
        epoch: 0,
        seed,
    }
}

/// Residual sums after one sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// Σ over observed entries of the squared residual.
    pub sse: f64,
    pub observed: usize,
}

impl EpochStats {
    /// Mean squared error over observed entries.
    pub fn masked_mse(&self) -> f64 {
        if self.observed == 0 {
            0.0
        } else {
            self.sse / self.observed as f64
        }
    }
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n))
        .collect()
}

/// Splits residual storage into per-chunk slices.
fn split_rows<'a>(mut resid: &'a mut [f64], row_ptr: &[usize], n: usize) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(n.div_ceil(CHUNK));
    for range in chunk_ranges(n) {
        let len = row_ptr[range.end] - row_ptr[range.start];
        let (head, tail) = resid.split_at_mut(len);
        out.push(head);
        resid = tail;
    }
    out
}

/// `x − D(z ∘ s)` on observed entries.
pub(crate) fn residual(state: &GibbsState, pm: &PatchMatrix) -> Vec<f64> {
    let mut resid = pm.all_values().to_vec();
    let row_ptr = pm.row_ptr();
    let k_atoms = state.dict.len();
    let chunks = split_rows(&mut resid, row_ptr, pm.len());
    chunks
        .into_par_iter()
        .zip(chunk_ranges(pm.len()))
        .for_each(|(chunk, range)| {
            let base = row_ptr[range.start];
            for i in range {
                let r = &mut chunk[row_ptr[i] - base..row_ptr[i + 1] - base];
                let offsets = pm.observed_offsets(i);
                for k in 0..k_atoms {
                    let w = state.code.weight(i, k);
                    if w != 0.0 {
                        let d = state.dict.atom(k);
                        for (rv, &o) in r.iter_mut().zip(offsets) {
                            *rv -= w * d[o as usize];
                        }
                    }
                }
            }
        });
    resid
}

/// (Σ_{Ω_i} d², Σ_{Ω_i} d R⁽⁻ᵏ⁾) for one (patch, atom) site, where `r` holds
/// the full residual of the patch.
#[inline]
pub(crate) fn site_stats(atom: &[f64], offsets: &[u32], r: &[f64], z: bool, s: f64) -> (f64, f64) {
    let mut energy = 0.0;
    let mut dot = 0.0;
    for (&o, &rv) in offsets.iter().zip(r) {
        let d = atom[o as usize];
        energy += d * d;
        dot += d * rv;
    }
    if z {
        dot += s * energy;
    }
    (energy, dot)
}

/// `(patch, weight)` for every patch using each atom, grouped by chunk and
/// then by atom, patches ascending.
pub(crate) struct ActiveSets {
    chunks: Vec<(Vec<usize>, Vec<(usize, f64)>)>,
}

impl ActiveSets {
    pub(crate) fn new(code: &SparseCode) -> Self {
        let k_atoms = code.atoms();
        let chunks = chunk_ranges(code.patches())
            .into_par_iter()
            .map(|range| {
                let z = &code.z[range.start * k_atoms..range.end * k_atoms];
                let s = &code.s[range.start * k_atoms..range.end * k_atoms];
                let mut start = vec![0usize; k_atoms + 1];
                for row in z.chunks_exact(k_atoms.max(1)) {
                    for (c, &on) in start[1..].iter_mut().zip(row) {
                        *c += on as usize;
                    }
                }
                for k in 0..k_atoms {
                    start[k + 1] += start[k];
                }
                let mut cursor = start.clone();
                let mut entries = vec![(0, 0.0); start[k_atoms]];
                for (local, (zr, sr)) in z
                    .chunks_exact(k_atoms.max(1))
                    .zip(s.chunks_exact(k_atoms.max(1)))
                    .enumerate()
                {
                    for k in (0..k_atoms).filter(|&k| zr[k]) {
                        entries[cursor[k]] = (range.start + local, sr[k]);
                        cursor[k] += 1;
                    }
                }
                (start, entries)
            })
            .collect();
        Self { chunks }
    }

    fn get(&self, chunk: usize, k: usize) -> &[(usize, f64)] {
        let (start, entries) = &self.chunks[chunk];
        &entries[start[k]..start[k + 1]]
    }
}

/// Adds one chunk's share of (Σ z s R⁽⁻ᵏ⁾, Σ z s²) for `atom`; `r` holds
/// the chunk's residuals starting at `base`.
fn accumulate_atom(
    pm: &PatchMatrix,
    atom: &[f64],
    active: &[(usize, f64)],
    r: &[f64],
    base: usize,
) -> (Vec<f64>, Vec<f64>) {
    let p = pm.patch_len();
    let row_ptr = pm.row_ptr();
    let mut num = vec![0.0; p];
    let mut den = vec![0.0; p];
    for &(i, s) in active {
        let ri = &r[row_ptr[i] - base..row_ptr[i + 1] - base];
        for (&o, &rv) in pm.observed_offsets(i).iter().zip(ri) {
            let o = o as usize;
            num[o] += s * (rv + s * atom[o]);
            den[o] += s * s;
        }
    }
    (num, den)
}

/// Sums per-chunk partials in chunk order.
fn reduce_partials(partials: Vec<(Vec<f64>, Vec<f64>)>, p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut num = vec![0.0; p];
    let mut den = vec![0.0; p];
    for (pn, pd) in partials {
        num.iter_mut().zip(pn).for_each(|(a, b)| *a += b);
        den.iter_mut().zip(pd).for_each(|(a, b)| *a += b);
    }
    (num, den)
}

/// Per-element (Σ z s R⁽⁻ᵏ⁾, Σ z s²) for atom `k`, given the patches that
/// use it.
pub(crate) fn atom_sums(
    state: &GibbsState,
    pm: &PatchMatrix,
    resid: &[f64],
    k: usize,
    active: &ActiveSets,
) -> (Vec<f64>, Vec<f64>) {
    let atom = state.dict.atom(k);
    let row_ptr = pm.row_ptr();
    let partials = chunk_ranges(pm.len())
        .into_par_iter()
        .enumerate()
        .map(|(c, range)| {
            let base = row_ptr[range.start];
            let r = &resid[base..row_ptr[range.end]];
            accumulate_atom(pm, atom, active.get(c, k), r, base)
        })
        .collect();
    reduce_partials(partials, pm.patch_len())
}

fn check_hyperparams(state: &GibbsState, hp: &Hyperparams) -> Result<()> {
    hp.validate()?;
    if hp.atoms != state.dict.len() {
        return Err(Error::Config(format!(
            "hyperparameters are for {} atoms, state has {}",
            hp.atoms,
            state.dict.len()
        )));
    }
    Ok(())
}

/// One full sweep: atoms (unless frozen), then z and s per patch, then π,
/// γ_s and γ_ε. Increments `state.epoch`.
pub fn gibbs_epoch(
    state: &mut GibbsState,
    pm: &PatchMatrix,
    hp: &Hyperparams,
    freeze_dict: bool,
) -> Result<EpochStats> {
    let n = pm.len();
    let p = pm.patch_len();
    state.check_dims(n, p)?;
    check_hyperparams(state, hp)?;
    let k_atoms = state.dict.len();
    let epoch = state.epoch;
    let seed = state.seed;
    let row_ptr = pm.row_ptr();
    let mut resid = residual(state, pm);

    // (1) atoms. The residual update for atom k and the sums for atom k+1
    // share one pass over each chunk.
    if !freeze_dict && k_atoms > 0 {
        let active = ActiveSets::new(&state.code);
        let mut sums = atom_sums(state, pm, &resid, 0, &active);
        for k in 0..k_atoms {
            let (num, den) = sums;
            let mut rng = rng::stream(seed, epoch, StreamClass::Atom, k as u64);
            let delta: Vec<f64> = num
                .iter()
                .zip(&den)
                .zip(state.dict.atom(k))
                .map(|((&nu, &de), &old)| {
                    let (lambda, mu) = atom_element_posterior(p, state.gamma_eps, de, nu);
                    let new = mu + rng.sample::<f64, _>(StandardNormal) / lambda.sqrt();
                    new - old
                })
                .collect();
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence(format!("atom {k} became non-finite")));
            }
            state
                .dict
                .atom_mut(k)
                .iter_mut()
                .zip(&delta)
                .for_each(|(d, dd)| *d += dd);

            let next = (k + 1 < k_atoms).then(|| state.dict.atom(k + 1));
            let partials: Vec<(Vec<f64>, Vec<f64>)> = split_rows(&mut resid, row_ptr, n)
                .into_par_iter()
                .zip(chunk_ranges(n))
                .enumerate()
                .map(|(c, (chunk, range))| {
                    let base = row_ptr[range.start];
                    for &(i, s) in active.get(c, k) {
                        let r = &mut chunk[row_ptr[i] - base..row_ptr[i + 1] - base];
                        for (rv, &o) in r.iter_mut().zip(pm.observed_offsets(i)) {
                            *rv -= s * delta[o as usize];
                        }
                    }
                    match next {
                        Some(atom) => accumulate_atom(pm, atom, active.get(c, k + 1), chunk, base),
                        None => (Vec::new(), Vec::new()),
                    }
                })
                .collect();
            sums = reduce_partials(partials, p);
        }
    }

    // (2) usage indicators and weights, patch by patch
    {
        let dict = &state.dict;
        let (gamma_s, gamma_eps) = (state.gamma_s, state.gamma_eps);
        let prior_sd = 1.0 / gamma_s.sqrt();
        let code = &mut state.code;
        split_rows(&mut resid, row_ptr, n)
            .into_par_iter()
            .zip(code.z.par_chunks_mut(CHUNK * k_atoms))
            .zip(code.s.par_chunks_mut(CHUNK * k_atoms))
            .zip(chunk_ranges(n))
            .try_for_each(|(((chunk, zc), sc), range)| -> Result<()> {
                let base = row_ptr[range.start];
                for i in range.clone() {
                    let r = &mut chunk[row_ptr[i] - base..row_ptr[i + 1] - base];
                    let offsets = pm.observed_offsets(i);
                    let row = (i - range.start) * k_atoms;
                    let mut rng = rng::stream(seed, epoch, StreamClass::Code, i as u64);
                    for k in 0..k_atoms {
                        let atom = dict.atom(k);
                        let (z_old, s_old) = (zc[row + k], sc[row + k]);
                        let (energy, corr) = site_stats(atom, offsets, r, z_old, s_old);
                        let log_odds = usage_log_odds(dict.pi()[k], gamma_eps, s_old, energy, corr);
                        if log_odds.is_nan() {
                            return Err(Error::Divergence(format!(
                                "usage odds undefined at patch {i}, atom {k}"
                            )));
                        }
                        let u = open01(&mut rng);
                        let z_new = (u.ln() - (-u).ln_1p()) < log_odds;
                        let g: f64 = rng.sample(StandardNormal);
                        let s_new = if z_new {
                            let (mean, alpha) = weight_posterior(gamma_s, gamma_eps, energy, corr);
                            mean + g / alpha.sqrt()
                        } else {
                            g * prior_sd
                        };
                        let w_old = if z_old { s_old } else { 0.0 };
                        let w_new = if z_new { s_new } else { 0.0 };
                        let change = w_old - w_new;
                        if change != 0.0 {
                            for (rv, &o) in r.iter_mut().zip(offsets) {
                                *rv += change * atom[o as usize];
                            }
                        }
                        zc[row + k] = z_new;
                        sc[row + k] = s_new;
                    }
                }
                Ok(())
            })?;
    }

    // (3) usage probabilities
    for k in 0..k_atoms {
        let (alpha, beta) = usage_probability_posterior(hp, n, state.code.usage(k));
        let mut rng = rng::stream(seed, epoch, StreamClass::Pi, k as u64);
        let draw = Beta::new(alpha, beta)
            .map_err(|e| Error::Divergence(format!("usage posterior for atom {k}: {e}")))?
            .sample(&mut rng);
        state.dict.pi_mut()[k] = if draw.is_nan() {
            0.5
        } else {
            draw.clamp(PI_MIN, PI_MAX)
        };
    }

    // (4) weight precision
    let sum_s2: f64 = state.code.s.iter().map(|s| s * s).sum();
    let (shape, rate) = weight_precision_posterior(hp, n, k_atoms, sum_s2);
    state.gamma_s = sample_precision(shape, rate, seed, epoch, StreamClass::GammaS)?;

    // (5) noise precision
    let sse: f64 = split_sum(&resid, row_ptr, n);
    if !sse.is_finite() {
        return Err(Error::Divergence("residual is non-finite".into()));
    }
    let observed = pm.total_observed();
    let (shape, rate) = noise_precision_posterior(hp, observed, sse);
    state.gamma_eps = sample_precision(shape, rate, seed, epoch, StreamClass::GammaEps)?;

    state.epoch += 1;
    Ok(EpochStats { sse, observed })
}

/// Σ r² accumulated chunk by chunk in a fixed order.
fn split_sum(resid: &[f64], row_ptr: &[usize], n: usize) -> f64 {
    chunk_ranges(n)
        .into_par_iter()
        .map(|range| {
            resid[row_ptr[range.start]..row_ptr[range.end]]
                .iter()
                .map(|r| r * r)
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

fn sample_precision(
    shape: f64,
    rate: f64,
    seed: u64,
    epoch: u64,
    class: StreamClass,
) -> Result<f64> {
    let mut rng = rng::stream(seed, epoch, class, 0);
    let value = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Divergence(format!("precision posterior Gamma({shape}, {rate}): {e}")))?
        .sample(&mut rng);
    if !value.is_finite() {
        return Err(Error::Divergence(format!(
            "precision draw {value} is non-finite"
        )));
    }
    Ok(value.max(PRECISION_FLOOR))
}

/// Patch estimates `D(z_i ∘ s_i)` over every element, observed or not.
pub fn estimates(state: &GibbsState, patch_len: usize) -> PatchEstimates {
    let n = state.code.patches();
    let k_atoms = state.dict.len();
    let mut out = PatchEstimates::zeros(n, patch_len);
    out.values_mut()
        .par_chunks_mut(CHUNK * patch_len)
        .enumerate()
        .for_each(|(c, block)| {
            for (local, row) in block.chunks_mut(patch_len).enumerate() {
                let i = c * CHUNK + local;
                for k in 0..k_atoms {
                    let w = state.code.weight(i, k);
                    if w != 0.0 {
                        row.iter_mut()
                            .zip(state.dict.atom(k))
                            .for_each(|(x, d)| *x += w * d);
                    }
                }
            }
        });
    out
}

/// Settings for [`infer`].
#[derive(Clone, Debug, PartialEq)]
pub struct InferOptions {
    pub epochs: usize,
    pub seed: u64,
    pub freeze_dict: bool,
    pub init: InitMode,
    /// Start from this dictionary instead of initializing one. Its patch
    /// shape must equal the patch matrix's; K is taken from it.
    pub initial_dict: Option<Dictionary>,
    /// Average the estimates of the last this-many sweeps (0 or 1: last
    /// sample only).
    pub tail_average: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            freeze_dict: false,
            init: InitMode::Prior,
            initial_dict: None,
            tail_average: 0,
        }
    }
}

/// Sampler state and patch estimates after inference.
#[derive(Clone, Debug)]
pub struct Inference {
    pub state: GibbsState,
    pub estimates: PatchEstimates,
}

/// Passed to the observer after every sweep.
#[derive(Debug)]
pub struct EpochReport<'a> {
    pub state: &'a GibbsState,
    pub stats: EpochStats,
    pub elapsed: Duration,
}

pub fn infer(pm: &PatchMatrix, hp: &Hyperparams, opts: &InferOptions) -> Result<Inference> {
    infer_with(pm, hp, opts, |_| {})
}

/// [`infer`] with a callback after each sweep.
pub fn infer_with(
    pm: &PatchMatrix,
    hp: &Hyperparams,
    opts: &InferOptions,
    observer: impl FnMut(&EpochReport<'_>),
) -> Result<Inference> {
    if opts.epochs == 0 {
        return Err(Error::Config("at least one epoch is required".into()));
    }
    let (mut state, hp) = match &opts.initial_dict {
        Some(dict) => {
            if dict.patch_shape() != pm.spec().patch_shape() {
                return Err(Error::IncompatibleDictionary(format!(
                    "dictionary patch shape {:?} differs from {:?}; transfer it first",
                    dict.patch_shape(),
                    pm.spec().patch_shape()
                )));
            }
            let hp = hp.with_atoms(dict.len());
            hp.validate()?;
            (
                state_from_dictionary(dict.clone(), pm.len(), &hp, opts.seed),
                hp,
            )
        }
        None => (init_state(pm, hp, opts.seed, opts.init)?, *hp),
    };
    let estimates = run_epochs(
        &mut state,
        pm,
        &hp,
        opts.epochs,
        opts.freeze_dict,
        opts.tail_average,
        observer,
    )?;
    Ok(Inference { state, estimates })
}

/// Runs `epochs` sweeps on an existing state and returns the estimates.
pub fn run_epochs(
    state: &mut GibbsState,
    pm: &PatchMatrix,
    hp: &Hyperparams,
    epochs: usize,
    freeze_dict: bool,
    tail_average: usize,
    mut observer: impl FnMut(&EpochReport<'_>),
) -> Result<PatchEstimates> {
    let p = pm.patch_len();
    let tail = tail_average.clamp(1, epochs.max(1));
    let mut acc: Option<PatchEstimates> = None;
    for e in 0..epochs {
        let start = Instant::now();
        let stats = gibbs_epoch(state, pm, hp, freeze_dict)?;
        let elapsed = start.elapsed();
        observer(&EpochReport {
            state,
            stats,
            elapsed,
        });
        if tail > 1 && e + tail >= epochs {
            let est = estimates(state, p);
            match acc.as_mut() {
                None => acc = Some(est),
                Some(sum) => sum
                    .values_mut()
                    .iter_mut()
                    .zip(est.values())
                    .for_each(|(a, b)| *a += b),
            }
        }
    }
    Ok(match acc {
        Some(mut sum) => {
            let scale = 1.0 / tail as f64;
            sum.values_mut().iter_mut().for_each(|v| *v *= scale);
            sum
        }
        None => estimates(state, p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::{extract_patches, PatchSpec};
    use crate::tensor::{SampleMask, Tensor, TensorShape};

    fn tiny_problem(ratio_mask: &[bool]) -> PatchMatrix {
        let shape = TensorShape::new(&[4, 4]).unwrap();
        let t = Tensor::from_fn(shape.clone(), |c| ((c[0] * 3 + c[1] * 5) % 7) as f64 / 7.0);
        let mask = SampleMask::new(shape, ratio_mask.to_vec()).unwrap();
        extract_patches(&t, &mask, &PatchSpec::dense(&[2, 2]).unwrap(), true).unwrap()
    }

    #[test]
    fn prior_init() {
        let pm = tiny_problem(&[true; 16]);
        let hp = Hyperparams::default().with_atoms(3);
        let st = init_state(&pm, &hp, 1, InitMode::Prior).unwrap();
        assert!(st.dict.pi().iter().all(|&p| p == 0.5));
        assert!(st.code.z.iter().all(|&z| !z));
        assert_eq!(st.gamma_s, 1.0);
        assert_eq!(st.gamma_eps, 1.0);
    }

    #[test]
    fn data_init_unit_norm_and_surplus() {
        let pm = tiny_problem(&[true; 16]);
        let hp = Hyperparams::default().with_atoms(2);
        let st = init_state(&pm, &hp, 1, InitMode::Data).unwrap();
        for k in 0..2 {
            let norm: f64 = st.dict.atom(k).iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // 9 patches, 12 atoms: the last three come from the prior.
        let st = init_state(&pm, &hp.with_atoms(12), 1, InitMode::Data).unwrap();
        assert_eq!(st.dict.len(), 12);
    }

    #[test]
    fn epoch_counter_and_freeze() {
        let pm = tiny_problem(&[true; 16]);
        let hp = Hyperparams::default().with_atoms(3);
        let opts = InferOptions {
            epochs: 2,
            seed: 4,
            ..Default::default()
        };
        let inf = infer(&pm, &hp, &opts).unwrap();
        assert_eq!(inf.state.epoch, 2);

        let frozen = InferOptions {
            epochs: 5,
            freeze_dict: true,
            initial_dict: Some(inf.state.dict.clone()),
            ..opts
        };
        let again = infer(&pm, &hp, &frozen).unwrap();
        assert_eq!(again.state.dict.atoms(), inf.state.dict.atoms());
    }

    #[test]
    fn residual_cache_stays_consistent() {
        let mut mask = [true; 16];
        mask[3] = false;
        mask[9] = false;
        let pm = tiny_problem(&mask);
        let hp = Hyperparams::default().with_atoms(3);
        let mut st = init_state(&pm, &hp, 8, InitMode::Prior).unwrap();
        for _ in 0..3 {
            let stats = gibbs_epoch(&mut st, &pm, &hp, false).unwrap();
            assert!(stats.sse.is_finite());
        }
        // A fresh residual must agree with the direct definition.
        let r = residual(&st, &pm);
        let dense = estimates(&st, pm.patch_len());
        let mut idx = 0;
        for i in 0..pm.len() {
            for (&o, &x) in pm.observed_offsets(i).iter().zip(pm.observed_values(i)) {
                let direct = x - dense.row(i)[o as usize];
                assert!((r[idx] - direct).abs() < 1e-12);
                idx += 1;
            }
        }
    }

    #[test]
    fn mismatched_hyperparams_rejected() {
        let pm = tiny_problem(&[true; 16]);
        let hp = Hyperparams::default().with_atoms(3);
        let mut st = init_state(&pm, &hp, 0, InitMode::Prior).unwrap();
        assert!(gibbs_epoch(&mut st, &pm, &hp.with_atoms(4), false).is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let pm = tiny_problem(&[true; 16]);
        let opts = InferOptions {
            epochs: 0,
            ..Default::default()
        };
        assert!(infer(&pm, &Hyperparams::default(), &opts).is_err());
    }

    #[test]
    fn tail_average_runs() {
        let pm = tiny_problem(&[true; 16]);
        let hp = Hyperparams::default().with_atoms(2);
        let opts = InferOptions {
            epochs: 4,
            tail_average: 3,
            ..Default::default()
        };
        let inf = infer(&pm, &hp, &opts).unwrap();
        assert_eq!(inf.estimates.len(), pm.len());
        assert!(inf.estimates.values().iter().all(|v| v.is_finite()));
    }
}
