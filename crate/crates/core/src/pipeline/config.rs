//! Problem definitions and the textual session config.
//!
//! ```text
//! # comment
//! [problem grey]
//! patch = 10,10
//! atoms = 64
//! sampler = uniform-random
//! ratio = 0.3
//! sampler.tile = 8,8
//! ```

use crate::bpfa::{Hyperparams, InitMode};
use crate::error::{Error, Result};
use crate::patches::PatchSpec;
use crate::sampling::{SamplerSpec, UNIFORM_RANDOM};

/// One reconstruction problem in a session.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub patch: PatchSpec,
    pub hyper: Hyperparams,
    /// Mask strategy; its seed also seeds inference.
    pub sampler: SamplerSpec,
    pub epochs_per_frame: usize,
    pub freeze_dict: bool,
    /// Carry dictionary, π and precisions from frame to frame.
    pub warm_start: bool,
    pub data_consistency: bool,
    /// Frames double as ground truth (artificial subsampling).
    pub reference_available: bool,
    pub mean_subtract: bool,
    pub init: InitMode,
    /// Draw a new mask for every frame instead of reusing the first one.
    pub mask_per_frame: bool,
}

impl ProblemConfig {
    pub fn new(name: impl Into<String>, patch: PatchSpec) -> Self {
        Self {
            name: name.into(),
            patch,
            hyper: Hyperparams::default(),
            sampler: SamplerSpec {
                strategy: UNIFORM_RANDOM.into(),
                ratio: 0.3,
                seed: 0,
                params: Default::default(),
            },
            epochs_per_frame: 1,
            freeze_dict: false,
            warm_start: true,
            data_consistency: false,
            reference_available: true,
            mean_subtract: true,
            init: InitMode::Prior,
            mask_per_frame: false,
        }
    }

    pub fn seed(&self) -> u64 {
        self.sampler.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("problem name is empty".into()));
        }
        if self.epochs_per_frame == 0 {
            return Err(Error::Config(format!(
                "problem {:?}: epochs_per_frame must be at least 1",
                self.name
            )));
        }
        self.hyper.validate()?;
        self.sampler.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || {
            Error::Config(format!(
                "problem {:?}: bad value {value:?} for {key}",
                self.name
            ))
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let flag = |v: &str| match v {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(bad()),
        };
        match key {
            "patch" => {
                let shape = parse_list(value).ok_or_else(bad)?;
                let stride = if self.patch.stride().len() == shape.len() {
                    self.patch.stride().to_vec()
                } else {
                    vec![1; shape.len()]
                };
                self.patch = PatchSpec::new(&shape, &stride)?;
            }
            "stride" => {
                let stride = parse_list(value).ok_or_else(bad)?;
                self.patch = PatchSpec::new(self.patch.patch_shape(), &stride)?;
            }
            "atoms" => self.hyper.atoms = value.parse().map_err(|_| bad())?,
            "a" => self.hyper.a = num(value)?,
            "b" => self.hyper.b = num(value)?,
            "c" => self.hyper.c = num(value)?,
            "d" => self.hyper.d = num(value)?,
            "e" => self.hyper.e = num(value)?,
            "f" => self.hyper.f = num(value)?,
            "sampler" => self.sampler.strategy = value.to_string(),
            "ratio" => self.sampler.ratio = num(value)?,
            "seed" => self.sampler.seed = value.parse().map_err(|_| bad())?,
            "epochs_per_frame" | "epochs" => {
                self.epochs_per_frame = value.parse().map_err(|_| bad())?
            }
            "freeze_dict" => self.freeze_dict = flag(value)?,
            "warm_start" => self.warm_start = flag(value)?,
            "data_consistency" => self.data_consistency = flag(value)?,
            "reference" | "reference_available" => self.reference_available = flag(value)?,
            "mean_subtract" => self.mean_subtract = flag(value)?,
            "mask_per_frame" => self.mask_per_frame = flag(value)?,
            "init" => {
                self.init = match value {
                    "prior" => InitMode::Prior,
                    "data" => InitMode::Data,
                    _ => return Err(bad()),
                }
            }
            _ => match key.strip_prefix("sampler.") {
                Some(param) if !param.is_empty() => {
                    self.sampler
                        .params
                        .insert(param.to_string(), value.to_string());
                }
                _ => {
                    return Err(Error::Config(format!(
                        "problem {:?}: unknown key {key:?}",
                        self.name
                    )))
                }
            },
        }
        Ok(())
    }
}

fn parse_list(v: &str) -> Option<Vec<usize>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

/// Parses `[problem NAME]` sections of `key = value` lines.
pub fn parse_session_config(text: &str) -> Result<Vec<ProblemConfig>> {
    let mut problems: Vec<ProblemConfig> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
        if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = section
                .trim()
                .strip_prefix("problem")
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| at(format!("expected [problem NAME], found [{section}]")))?;
            if problems.iter().any(|p| p.name == name) {
                return Err(Error::DuplicateProblem(name.to_string()));
            }
            problems.push(ProblemConfig::new(
                name,
                PatchSpec::dense(&[10, 10]).expect("valid default patch"),
            ));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected key = value, found {line:?}")))?;
        let current = problems
            .last_mut()
            .ok_or_else(|| at("setting outside a [problem NAME] section".into()))?;
        current
            .set(key.trim(), value.trim())
            .map_err(|e| at(e.to_string()))?;
    }
    if problems.is_empty() {
        return Err(Error::Config("no [problem NAME] sections".into()));
    }
    for p in &problems {
        p.validate()?;
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_problems() {
        let text = "
# live demo
[problem grey]
patch = 8,8
stride = 2,2
atoms = 16
ratio = 0.25
seed = 9
epochs_per_frame = 3
sampler.tile = 4,4

[problem colour]
patch = 10,10,3
sampler = stratified
warm_start = off
";
        let probs = parse_session_config(text).unwrap();
        assert_eq!(probs.len(), 2);
        let g = &probs[0];
        assert_eq!(g.name, "grey");
        assert_eq!(g.patch.patch_shape(), &[8, 8]);
        assert_eq!(g.patch.stride(), &[2, 2]);
        assert_eq!(g.hyper.atoms, 16);
        assert_eq!(g.sampler.ratio, 0.25);
        assert_eq!(g.seed(), 9);
        assert_eq!(g.epochs_per_frame, 3);
        assert_eq!(g.sampler.params["tile"], "4,4");
        let c = &probs[1];
        assert_eq!(c.patch.patch_shape(), &[10, 10, 3]);
        assert_eq!(c.patch.stride(), &[1, 1, 1]);
        assert_eq!(c.sampler.strategy, "stratified");
        assert!(!c.warm_start);
    }

    #[test]
    fn errors() {
        assert!(parse_session_config("").is_err());
        assert!(parse_session_config("atoms = 3").is_err());
        assert!(parse_session_config("[problem a]\nbogus = 1").is_err());
        assert!(parse_session_config("[problem a]\nratio = 2").is_err());
        assert!(parse_session_config("[problem a]\nepochs = 0").is_err());
        assert!(matches!(
            parse_session_config("[problem a]\n[problem a]"),
            Err(Error::DuplicateProblem(_))
        ));
        assert!(parse_session_config("[thing a]").is_err());
    }
}
