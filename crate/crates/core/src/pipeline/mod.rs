//! Multi-problem streaming reconstruction.
//!
//! A [`Pipeline`] owns any number of named problems. Each frame submitted to
//! a problem is masked, cut into patches, refined by a few Gibbs sweeps and
//! reassembled. With warm start the dictionary, usage probabilities and
//! precisions survive from one frame to the next while the per-patch codes
//! start over.

mod config;
mod live;
mod source;

pub use config::{parse_session_config, ProblemConfig};
pub use live::{run_live, Control, ControlAck, ControlRequest, LiveSink, LiveSummary};
pub use source::{synthetic_texture, FrameSource};

use std::time::Duration;

use crate::bpfa::{
    init_state, run_epochs, state_from_dictionary, transfer_dictionary, Dictionary, GibbsState,
};
use crate::error::{Error, Result};
use crate::metrics::{model_stats, mse, psnr_from_mse, FrameMetrics, UNIT_PEAK};
use crate::patches::{extract_patches, reconstitute, Coverage};
use crate::sampling::{MaskRequest, SamplerSpec, StrategyRegistry, ADAPTIVE_RESIDUAL};
use crate::tensor::{apply_data_consistency, SampleMask, Tensor, TensorShape};

/// Opaque reference to a problem inside one [`Pipeline`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProblemHandle(usize);

impl ProblemHandle {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Output of one processed frame.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub problem: ProblemHandle,
    pub reconstruction: Tensor,
    /// The frame with unobserved elements zeroed.
    pub masked_input: Tensor,
    pub mask: SampleMask,
    pub ground_truth: Option<Tensor>,
    pub metrics: FrameMetrics,
    pub dictionary: Dictionary,
}

/// Read-only summary of a problem.
#[derive(Clone, Debug)]
pub struct ProblemStatus {
    pub handle: ProblemHandle,
    pub config: ProblemConfig,
    pub frames_processed: u64,
    pub frame_shape: Option<TensorShape>,
    pub metrics: Option<FrameMetrics>,
}

struct Problem {
    cfg: ProblemConfig,
    state: Option<GibbsState>,
    installed: Option<Dictionary>,
    shape: Option<TensorShape>,
    cached_mask: Option<(SamplerSpec, SampleMask)>,
    recon: Option<Tensor>,
    prev_recon: Option<Tensor>,
    metrics: Option<FrameMetrics>,
    frames: u64,
}

impl Problem {
    fn new(cfg: ProblemConfig) -> Self {
        Self {
            cfg,
            state: None,
            installed: None,
            shape: None,
            cached_mask: None,
            recon: None,
            prev_recon: None,
            metrics: None,
            frames: 0,
        }
    }

    fn dictionary(&self) -> Option<&Dictionary> {
        self.state
            .as_ref()
            .map(|s| &s.dict)
            .or(self.installed.as_ref())
    }

    fn residual_map(&self, shape: &TensorShape) -> Tensor {
        match (&self.recon, &self.prev_recon) {
            (Some(cur), Some(prev)) => {
                let data = cur
                    .data()
                    .iter()
                    .zip(prev.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .collect();
                Tensor::new(shape.clone(), data).expect("same shape")
            }
            _ => Tensor::zeros(shape.clone()),
        }
    }

    fn mask(&mut self, registry: &StrategyRegistry, shape: &TensorShape) -> Result<SampleMask> {
        let spec = &self.cfg.sampler;
        let adaptive = spec.strategy == ADAPTIVE_RESIDUAL;
        if !adaptive && !self.cfg.mask_per_frame {
            if let Some((cached, mask)) = &self.cached_mask {
                if cached == spec {
                    return Ok(mask.clone());
                }
            }
        }
        let residual = adaptive.then(|| self.residual_map(shape));
        let previous = self.cached_mask.as_ref().map(|(_, m)| m);
        let mask = registry.select(&MaskRequest {
            shape,
            spec,
            previous,
            residual: residual.as_ref(),
            frame: if self.cfg.mask_per_frame {
                self.frames
            } else {
                0
            },
        })?;
        self.cached_mask = Some((spec.clone(), mask.clone()));
        Ok(mask)
    }

    fn submit(
        &mut self,
        handle: ProblemHandle,
        registry: &StrategyRegistry,
        frame: &Tensor,
        truth: Option<&Tensor>,
    ) -> Result<FrameResult> {
        if let Some(shape) = &self.shape {
            shape.ensure_eq(frame.shape())?;
        }
        if let Some(gt) = truth {
            frame.shape().ensure_eq(gt.shape())?;
        }
        if frame.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let cfg = &self.cfg;
        cfg.patch.validate_for(frame.shape())?;
        let shape = frame.shape().clone();
        let mask = self.mask(registry, &shape)?;
        let cfg = &self.cfg;
        let pm = extract_patches(frame, &mask, &cfg.patch, cfg.mean_subtract)?;

        let mut state = match (self.state.take(), cfg.warm_start) {
            (Some(mut st), true) => {
                st.reset_codes(pm.len());
                st
            }
            _ => match &self.installed {
                Some(dict) => state_from_dictionary(dict.clone(), pm.len(), &cfg.hyper, cfg.seed()),
                None => init_state(&pm, &cfg.hyper, cfg.seed(), cfg.init)?,
            },
        };
        let hp = cfg.hyper.with_atoms(state.dict.len());
        let mut elapsed = Duration::ZERO;
        let est = run_epochs(
            &mut state,
            &pm,
            &hp,
            cfg.epochs_per_frame,
            cfg.freeze_dict,
            1,
            |r| elapsed += r.elapsed,
        )?;
        let recon = reconstitute(&pm, &est, Coverage::Lenient)?.tensor;
        let recon = apply_data_consistency(&recon, frame, &mask, cfg.data_consistency)?;

        let err = truth.map(|gt| mse(&recon, gt)).transpose()?;
        let stats = model_stats(&state);
        let metrics = FrameMetrics {
            frame_id: self.frames,
            psnr_db: err.map(|e| psnr_from_mse(e, UNIT_PEAK)),
            mse: err,
            sampling_ratio: mask.ratio(),
            atoms_per_patch: stats.atoms_per_patch,
            pi_histogram: stats.pi,
            epoch_time_ms: elapsed.as_secs_f64() * 1e3 / cfg.epochs_per_frame as f64,
            epochs_run: cfg.epochs_per_frame,
        };
        let result = FrameResult {
            problem: handle,
            masked_input: frame.masked(&mask)?,
            reconstruction: recon.clone(),
            mask,
            ground_truth: truth.cloned(),
            metrics: metrics.clone(),
            dictionary: state.dict.clone(),
        };
        self.state = Some(state);
        self.shape = Some(shape);
        self.prev_recon = self.recon.replace(recon);
        self.metrics = Some(metrics);
        self.frames += 1;
        Ok(result)
    }
}

/// Named reconstruction problems sharing one worker pool.
pub struct Pipeline {
    problems: Vec<Problem>,
    registry: StrategyRegistry,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self::new()
    }
}

impl Pipeline {
    pub fn new() -> Self {
        Self::with_registry(StrategyRegistry::default())
    }

    pub fn with_registry(registry: StrategyRegistry) -> Self {
        Self {
            problems: Vec::new(),
            registry,
        }
    }

    pub fn registry(&self) -> &StrategyRegistry {
        &self.registry
    }

    pub fn create_problem(&mut self, cfg: ProblemConfig) -> Result<ProblemHandle> {
        cfg.validate()?;
        if !self.registry.contains(&cfg.sampler.strategy) {
            return Err(Error::Sampler(format!(
                "unknown strategy {:?}",
                cfg.sampler.strategy
            )));
        }
        if self.handle(&cfg.name).is_some() {
            return Err(Error::DuplicateProblem(cfg.name));
        }
        self.problems.push(Problem::new(cfg));
        Ok(ProblemHandle(self.problems.len() - 1))
    }

    pub fn handle(&self, name: &str) -> Option<ProblemHandle> {
        self.problems
            .iter()
            .position(|p| p.cfg.name == name)
            .map(ProblemHandle)
    }

    pub fn handles(&self) -> impl Iterator<Item = ProblemHandle> {
        (0..self.problems.len()).map(ProblemHandle)
    }

    fn get(&self, h: ProblemHandle) -> Result<&Problem> {
        self.problems
            .get(h.0)
            .ok_or_else(|| Error::UnknownProblem(format!("#{}", h.0)))
    }

    fn get_mut(&mut self, h: ProblemHandle) -> Result<&mut Problem> {
        self.problems
            .get_mut(h.0)
            .ok_or_else(|| Error::UnknownProblem(format!("#{}", h.0)))
    }

    pub fn config(&self, h: ProblemHandle) -> Result<&ProblemConfig> {
        Ok(&self.get(h)?.cfg)
    }

    /// Changes a problem's settings; they apply from its next frame.
    pub fn update_config(
        &mut self,
        h: ProblemHandle,
        update: impl FnOnce(&mut ProblemConfig),
    ) -> Result<()> {
        let registry = self.registry.clone();
        let p = self.get_mut(h)?;
        let mut cfg = p.cfg.clone();
        update(&mut cfg);
        cfg.validate()?;
        if cfg.name != p.cfg.name {
            return Err(Error::Config("problems cannot be renamed".into()));
        }
        if !registry.contains(&cfg.sampler.strategy) {
            return Err(Error::Sampler(format!(
                "unknown strategy {:?}",
                cfg.sampler.strategy
            )));
        }
        p.cfg = cfg;
        Ok(())
    }

    pub fn status(&self, h: ProblemHandle) -> Result<ProblemStatus> {
        let p = self.get(h)?;
        Ok(ProblemStatus {
            handle: h,
            config: p.cfg.clone(),
            frames_processed: p.frames,
            frame_shape: p.shape.clone(),
            metrics: p.metrics.clone(),
        })
    }

    /// The learned dictionary, or an installed one before the first frame.
    pub fn dictionary(&self, h: ProblemHandle) -> Result<Option<&Dictionary>> {
        Ok(self.get(h)?.dictionary())
    }

    /// Index of the next frame `h` will process.
    pub fn next_frame_id(&self, h: ProblemHandle) -> Result<u64> {
        Ok(self.get(h)?.frames)
    }

    /// Installs a dictionary to start the next frame from.
    pub fn install_dictionary(&mut self, h: ProblemHandle, dict: Dictionary) -> Result<()> {
        let p = self.get_mut(h)?;
        if dict.patch_shape() != p.cfg.patch.patch_shape() {
            return Err(Error::IncompatibleDictionary(format!(
                "dictionary patch shape {:?} differs from problem patch shape {:?}",
                dict.patch_shape(),
                p.cfg.patch.patch_shape()
            )));
        }
        p.cfg.hyper.atoms = dict.len();
        match &mut p.state {
            Some(st) => {
                let n = st.code.patches();
                st.dict = dict.clone();
                st.reset_codes(n);
            }
            None => {}
        }
        p.installed = Some(dict);
        Ok(())
    }

    /// Reconstructs one frame. PSNR and MSE are reported only when
    /// `ground_truth` is given.
    pub fn submit_frame(
        &mut self,
        h: ProblemHandle,
        frame: &Tensor,
        ground_truth: Option<&Tensor>,
    ) -> Result<FrameResult> {
        let registry = &self.registry;
        let p = self
            .problems
            .get_mut(h.0)
            .ok_or_else(|| Error::UnknownProblem(format!("#{}", h.0)))?;
        p.submit(h, registry, frame, ground_truth)
    }

    /// Processes one frame for each listed problem concurrently.
    pub fn submit_many(
        &mut self,
        jobs: Vec<(ProblemHandle, Tensor, bool)>,
    ) -> Vec<(ProblemHandle, Result<FrameResult>)> {
        use rayon::prelude::*;
        let registry = &self.registry;
        let mut slots: Vec<Option<(Tensor, bool)>> =
            (0..self.problems.len()).map(|_| None).collect();
        let mut unknown = Vec::new();
        for (h, frame, with_truth) in jobs {
            match slots.get_mut(h.0) {
                Some(slot) => *slot = Some((frame, with_truth)),
                None => unknown.push(h),
            }
        }
        let mut out: Vec<(ProblemHandle, Result<FrameResult>)> = self
            .problems
            .par_iter_mut()
            .zip(slots.into_par_iter())
            .enumerate()
            .filter_map(|(i, (p, job))| {
                job.map(|(frame, truth)| {
                    let h = ProblemHandle(i);
                    let gt = truth.then_some(&frame);
                    (h, p.submit(h, registry, &frame, gt))
                })
            })
            .collect();
        out.extend(
            unknown
                .into_iter()
                .map(|h| (h, Err(Error::UnknownProblem(format!("#{}", h.0))))),
        );
        out
    }

    /// Adapts `src`'s dictionary to `dst`'s patch shape and installs it,
    /// resetting `dst`'s codes. `freeze` sets `dst`'s frozen-dictionary flag.
    pub fn transfer_between(
        &mut self,
        src: ProblemHandle,
        dst: ProblemHandle,
        freeze: bool,
    ) -> Result<()> {
        let source = self.get(src)?;
        let dict = source.dictionary().ok_or_else(|| {
            Error::IncompatibleDictionary(format!(
                "problem {:?} has no dictionary yet",
                source.cfg.name
            ))
        })?;
        let dst_shape = self.get(dst)?.cfg.patch.patch_shape().to_vec();
        let moved = transfer_dictionary(dict, &dst_shape)?;
        self.install_dictionary(dst, moved)?;
        self.get_mut(dst)?.cfg.freeze_dict = freeze;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patches::PatchSpec;

    fn cfg(name: &str, patch: &[usize]) -> ProblemConfig {
        let mut c = ProblemConfig::new(name, PatchSpec::dense(patch).unwrap());
        c.hyper.atoms = 8;
        c.epochs_per_frame = 3;
        c.sampler.ratio = 0.5;
        c.sampler.seed = 3;
        c
    }

    fn frame(shape: &[usize], t: f64) -> Tensor {
        synthetic_texture(&TensorShape::new(shape).unwrap(), 11, t)
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = Pipeline::new();
        p.create_problem(cfg("a", &[4, 4])).unwrap();
        assert!(matches!(
            p.create_problem(cfg("a", &[4, 4])),
            Err(Error::DuplicateProblem(_))
        ));
    }

    #[test]
    fn psnr_only_with_reference() {
        let mut p = Pipeline::new();
        let h = p.create_problem(cfg("a", &[4, 4])).unwrap();
        let f = frame(&[16, 16], 0.0);
        let r = p.submit_frame(h, &f, None).unwrap();
        assert!(r.metrics.psnr_db.is_none());
        let r = p.submit_frame(h, &f, Some(&f)).unwrap();
        assert!(r.metrics.psnr_db.unwrap().is_finite());
        assert_eq!(r.metrics.frame_id, 1);
        assert_eq!(r.metrics.epochs_run, 3);
        assert!((r.metrics.sampling_ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn shape_drift_is_an_error() {
        let mut p = Pipeline::new();
        let h = p.create_problem(cfg("a", &[4, 4])).unwrap();
        p.submit_frame(h, &frame(&[16, 16], 0.0), None).unwrap();
        assert!(p.submit_frame(h, &frame(&[16, 12], 0.0), None).is_err());
    }

    #[test]
    fn same_frame_twice_uses_same_mask() {
        let mut p = Pipeline::new();
        let h = p.create_problem(cfg("a", &[4, 4])).unwrap();
        let f = frame(&[16, 16], 0.0);
        let a = p.submit_frame(h, &f, None).unwrap();
        let b = p.submit_frame(h, &f, None).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.masked_input, b.masked_input);
    }

    #[test]
    fn warm_start_keeps_dictionary_state() {
        let mut p = Pipeline::new();
        let h = p.create_problem(cfg("a", &[4, 4])).unwrap();
        let f = frame(&[16, 16], 0.0);
        p.submit_frame(h, &f, None).unwrap();
        let before = p.get(h).unwrap().state.clone().unwrap();
        p.submit_frame(h, &frame(&[16, 16], 1.0), None).unwrap();
        let after = p.get(h).unwrap().state.as_ref().unwrap();
        assert_eq!(after.epoch, before.epoch + 3);
    }

    #[test]
    fn transfer_installs_and_freezes() {
        let mut p = Pipeline::new();
        let grey = p.create_problem(cfg("grey", &[4, 4])).unwrap();
        let colour = p.create_problem(cfg("colour", &[4, 4, 3])).unwrap();
        assert!(p.transfer_between(grey, colour, true).is_err());
        p.submit_frame(grey, &frame(&[16, 16], 0.0), None).unwrap();
        p.transfer_between(grey, colour, true).unwrap();
        let d = p.dictionary(colour).unwrap().unwrap();
        assert_eq!(d.patch_shape(), &[4, 4, 3]);
        assert!(p.config(colour).unwrap().freeze_dict);
        let r = p
            .submit_frame(colour, &frame(&[16, 16, 3], 0.0), None)
            .unwrap();
        assert_eq!(&r.dictionary, p.dictionary(colour).unwrap().unwrap());
        let mismatched = p.create_problem(cfg("odd", &[5, 5])).unwrap();
        assert!(p.transfer_between(grey, mismatched, false).is_err());
    }

    #[test]
    fn submit_many_matches_sequential() {
        let build = || {
            let mut p = Pipeline::new();
            let a = p.create_problem(cfg("a", &[4, 4])).unwrap();
            let b = p.create_problem(cfg("b", &[3, 3])).unwrap();
            (p, a, b)
        };
        let f = frame(&[12, 12], 0.0);
        let (mut p1, a, b) = build();
        let seq_a = p1.submit_frame(a, &f, Some(&f)).unwrap();
        let seq_b = p1.submit_frame(b, &f, Some(&f)).unwrap();
        let (mut p2, a, b) = build();
        let out = p2.submit_many(vec![(a, f.clone(), true), (b, f.clone(), true)]);
        assert_eq!(out.len(), 2);
        let par_a = out[0].1.as_ref().unwrap();
        let par_b = out[1].1.as_ref().unwrap();
        assert_eq!(par_a.reconstruction, seq_a.reconstruction);
        assert_eq!(par_b.reconstruction, seq_b.reconstruction);
    }
}
