//! Sampling masks: which elements get measured.
//!
//! A strategy is a pure function of the request (shape, spec, previous mask,
//! residual map, frame index). Built-in strategies are registered by name in
//! [`StrategyRegistry`]; custom ones can be added next to them.
//!
//! All random choices are driven by per-element keys from
//! [`rng::element_keys`](crate::rng::element_keys), keyed by the seed, the frame
//! index and a fixed strategy id, so masks are reproducible and independent of
//! iteration order.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{SampleMask, Tensor, TensorShape};

pub const UNIFORM_RANDOM: &str = "uniform-random";
pub const STRATIFIED: &str = "stratified";
pub const LINE_HOP: &str = "line-hop";
pub const EXPLICIT_LIST: &str = "explicit-list";
pub const ADAPTIVE_RESIDUAL: &str = "adaptive-residual";

const UNIFORM_STREAM: u64 = 1;
const STRATIFIED_STREAM: u64 = 2;
const LINE_HOP_STREAM: u64 = 3;

/// Named strategy, target ratio, seed and strategy-specific parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSpec {
    pub strategy: String,
    pub ratio: f64,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

impl SamplerSpec {
    pub fn new(strategy: impl Into<String>, ratio: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            strategy: strategy.into(),
            ratio,
            seed,
            params: BTreeMap::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(ratio: f64, seed: u64) -> Result<Self> {
        Self::new(UNIFORM_RANDOM, ratio, seed)
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Sampler(format!(
                "ratio {} outside [0, 1]",
                self.ratio
            )));
        }
        Ok(())
    }

    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Sampler(format!("parameter {key}={v:?} is not a number"))),
        }
    }

    pub fn param_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.params
            .get(key)
            .map(|v| {
                v.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            Error::Sampler(format!("parameter {key} has bad entry {s:?}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Number of elements a mask with this ratio observes.
pub fn target_count(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64).round() as usize).min(len)
}

/// Everything a strategy may look at.
#[derive(Clone, Copy, Debug)]
pub struct MaskRequest<'a> {
    pub shape: &'a TensorShape,
    pub spec: &'a SamplerSpec,
    pub previous: Option<&'a SampleMask>,
    /// Non-negative per-element disagreement map.
    pub residual: Option<&'a Tensor>,
    pub frame: u64,
}

pub trait MaskStrategy: Send + Sync {
    fn select(&self, req: &MaskRequest<'_>) -> Result<SampleMask>;
}

impl<F> MaskStrategy for F
where
    F: Fn(&MaskRequest<'_>) -> Result<SampleMask> + Send + Sync,
{
    fn select(&self, req: &MaskRequest<'_>) -> Result<SampleMask> {
        self(req)
    }
}

/// Strategies by name.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn MaskStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut reg = Self {
            strategies: BTreeMap::new(),
        };
        reg.register(UNIFORM_RANDOM, uniform_random);
        reg.register(STRATIFIED, stratified);
        reg.register(LINE_HOP, line_hop);
        reg.register(EXPLICIT_LIST, explicit_list);
        reg.register(ADAPTIVE_RESIDUAL, adaptive_residual);
        reg
    }
}

impl std::fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.strategies.keys()).finish()
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, name: &str, strategy: impl MaskStrategy + 'static) {
        self.strategies.insert(name.to_string(), Arc::new(strategy));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.strategies.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }

    pub fn select(&self, req: &MaskRequest<'_>) -> Result<SampleMask> {
        req.spec.validate()?;
        if let Some(prev) = req.previous {
            req.shape.ensure_eq(prev.shape())?;
        }
        if let Some(res) = req.residual {
            req.shape.ensure_eq(res.shape())?;
        }
        let strategy = self
            .strategies
            .get(&req.spec.strategy)
            .ok_or_else(|| Error::Sampler(format!("unknown strategy {:?}", req.spec.strategy)))?;
        strategy.select(req)
    }
}

/// Mask for the first frame using the built-in registry.
pub fn make_mask(spec: &SamplerSpec, shape: &TensorShape) -> Result<SampleMask> {
    StrategyRegistry::default().select(&MaskRequest {
        shape,
        spec,
        previous: None,
        residual: None,
        frame: 0,
    })
}

/// Residual-guided mask: part of the budget explores uniformly, the rest goes
/// to the elements with the largest residual.
pub fn next_mask_adaptive(
    prev_mask: &SampleMask,
    residual_map: &Tensor,
    spec: &SamplerSpec,
) -> Result<SampleMask> {
    let spec = SamplerSpec {
        strategy: ADAPTIVE_RESIDUAL.to_string(),
        ..spec.clone()
    };
    StrategyRegistry::default().select(&MaskRequest {
        shape: prev_mask.shape(),
        spec: &spec,
        previous: Some(prev_mask),
        residual: Some(residual_map),
        frame: 0,
    })
}

/// Marks the `count` candidates with the smallest keys (ties by index).
fn pick_lowest(keys: &[u64], candidates: &mut [usize], count: usize, observed: &mut [bool]) {
    if count == 0 {
        return;
    }
    let count = count.min(candidates.len());
    if count < candidates.len() {
        candidates.select_nth_unstable_by_key(count - 1, |&i| (keys[i], i));
    }
    for &i in &candidates[..count] {
        observed[i] = true;
    }
}

/// Splits `total` over buckets in proportion to `ideal` using largest
/// remainders (ties by bucket index), never exceeding `capacity`.
fn apportion(total: usize, ideal: &[f64], capacity: &[usize]) -> Vec<usize> {
    let mut quota: Vec<usize> = ideal
        .iter()
        .zip(capacity)
        .map(|(&q, &c)| (q.floor() as usize).min(c))
        .collect();
    let mut remaining = total.saturating_sub(quota.iter().sum());
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while remaining > 0 {
        let before = remaining;
        for &j in &order {
            if remaining == 0 {
                break;
            }
            if quota[j] < capacity[j] {
                quota[j] += 1;
                remaining -= 1;
            }
        }
        if remaining == before {
            break;
        }
    }
    quota
}

fn uniform_random(req: &MaskRequest<'_>) -> Result<SampleMask> {
    let n = req.shape.len();
    let target = target_count(req.spec.ratio, n);
    let keys = rng::element_keys(req.spec.seed, req.frame, UNIFORM_STREAM, n);
    let mut observed = vec![false; n];
    let mut candidates: Vec<usize> = (0..n).collect();
    pick_lowest(&keys, &mut candidates, target, &mut observed);
    SampleMask::new(req.shape.clone(), observed)
}

/// Per-tile quotas over the first two dimensions (default 8x8 tiles).
fn stratified(req: &MaskRequest<'_>) -> Result<SampleMask> {
    let dims = req.shape.dims();
    let n = req.shape.len();
    let tile = req
        .spec
        .param_usize_list("tile")?
        .unwrap_or_else(|| vec![8, 8]);
    if tile.is_empty() || tile.contains(&0) {
        return Err(Error::Sampler("tile extents must be positive".into()));
    }
    let tile_r = tile[0];
    let (cols, tile_c) = match dims.get(1) {
        Some(&c) => (c, *tile.get(1).unwrap_or(&tile[0])),
        None => (1, 1),
    };
    let rows = dims[0];
    let inner: usize = dims.iter().skip(2).product();
    let tiles_r = rows.div_ceil(tile_r);
    let tiles_c = cols.div_ceil(tile_c);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); tiles_r * tiles_c];
    for e in 0..n {
        let rest = e / inner;
        let (r, c) = (rest / cols, rest % cols);
        members[(r / tile_r) * tiles_c + c / tile_c].push(e);
    }
    let target = target_count(req.spec.ratio, n);
    let ideal: Vec<f64> = members
        .iter()
        .map(|m| req.spec.ratio * m.len() as f64)
        .collect();
    let capacity: Vec<usize> = members.iter().map(Vec::len).collect();
    let quota = apportion(target, &ideal, &capacity);

    let keys = rng::element_keys(req.spec.seed, req.frame, STRATIFIED_STREAM, n);
    let mut observed = vec![false; n];
    for (m, q) in members.iter_mut().zip(quota) {
        pick_lowest(&keys, m, q, &mut observed);
    }
    SampleMask::new(req.shape.clone(), observed)
}

/// Evenly spaced samples along each fast-scan row with a random per-row phase.
fn line_hop(req: &MaskRequest<'_>) -> Result<SampleMask> {
    let dims = req.shape.dims();
    if !(2..=3).contains(&dims.len()) {
        return Err(Error::Sampler(format!(
            "line-hop needs a 2D or 3D shape, got {}",
            req.shape
        )));
    }
    let n = req.shape.len();
    let rows = dims[0];
    let row_len = n / rows;
    let target = target_count(req.spec.ratio, n);
    let ideal = vec![req.spec.ratio * row_len as f64; rows];
    let quota = apportion(target, &ideal, &vec![row_len; rows]);
    let keys = rng::element_keys(req.spec.seed, req.frame, LINE_HOP_STREAM, rows);

    let mut observed = vec![false; n];
    for (r, &q) in quota.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let phase = (keys[r] % row_len as u64) as usize;
        for j in 0..q {
            let pos = (phase + j * row_len / q) % row_len;
            observed[r * row_len + pos] = true;
        }
    }
    SampleMask::new(req.shape.clone(), observed)
}

/// Exactly the flat indices listed in the `indices` parameter.
fn explicit_list(req: &MaskRequest<'_>) -> Result<SampleMask> {
    let indices = req
        .spec
        .param_usize_list("indices")?
        .ok_or_else(|| Error::Sampler("explicit-list needs an `indices` parameter".into()))?;
    SampleMask::from_indices(req.shape.clone(), &indices)
}

/// Exploit fraction (parameter `exploit`, default 0.5) of the budget goes to
/// the highest positive residuals, ties by lowest flat index; the rest, plus
/// any exploit budget left over for lack of positive residuals, is spent
/// uniformly at random with the same keys as `uniform-random`.
fn adaptive_residual(req: &MaskRequest<'_>) -> Result<SampleMask> {
    let n = req.shape.len();
    let target = target_count(req.spec.ratio, n);
    let exploit_fraction = req.spec.param_f64("exploit", 0.5)?;
    if !(0.0..=1.0).contains(&exploit_fraction) {
        return Err(Error::Sampler(format!(
            "exploit fraction {exploit_fraction} outside [0, 1]"
        )));
    }
    let mut observed = vec![false; n];

    if let Some(residual) = req.residual {
        let data = residual.data();
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Sampler(
                "residual map must be finite and non-negative".into(),
            ));
        }
        let exploit = ((exploit_fraction * target as f64).round() as usize).min(target);
        let mut hot: Vec<usize> = (0..n).filter(|&i| data[i] > 0.0).collect();
        if exploit < hot.len() {
            hot.select_nth_unstable_by(exploit.saturating_sub(1), |&a, &b| {
                data[b].total_cmp(&data[a]).then(a.cmp(&b))
            });
            hot.truncate(exploit);
        }
        for &i in &hot {
            observed[i] = true;
        }
    }

    let chosen = observed.iter().filter(|&&o| o).count();
    let keys = rng::element_keys(req.spec.seed, req.frame, UNIFORM_STREAM, n);
    let mut rest: Vec<usize> = (0..n).filter(|&i| !observed[i]).collect();
    pick_lowest(&keys, &mut rest, target - chosen, &mut observed);
    SampleMask::new(req.shape.clone(), observed)
}
