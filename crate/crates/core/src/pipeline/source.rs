//! Frame producers feeding the live pipeline.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::read_any;
use crate::tensor::{Tensor, TensorShape};

const GRATINGS: usize = 8;

/// A deterministic texture: the sum of eight seeded sinusoidal gratings,
/// rescaled to `[0, 1]`. Gratings drift with `t`; dimensions past the second
/// shift the phase so channels differ.
pub fn synthetic_texture(shape: &TensorShape, seed: u64, t: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gratings: Vec<[f64; 5]> = (0..GRATINGS)
        .map(|_| {
            [
                rng.random_range(0.02..0.25),
                rng.random_range(0.0..PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.5..1.0),
                rng.random_range(-0.3..0.3),
            ]
        })
        .collect();
    let mut out = Tensor::from_fn(shape.clone(), |c| {
        let r = c[0] as f64;
        let col = c.get(1).copied().unwrap_or(0) as f64;
        let extra: f64 = c.iter().skip(2).map(|&v| v as f64 * 0.7).sum();
        gratings
            .iter()
            .map(|&[freq, theta, phase, amp, drift]| {
                let u = r * theta.cos() + col * theta.sin();
                amp * (2.0 * PI * freq * u + phase + drift * t + extra).cos()
            })
            .sum()
    });
    let (lo, hi) = out
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = if hi > lo { hi - lo } else { 1.0 };
    out.data_mut()
        .iter_mut()
        .for_each(|v| *v = (*v - lo) / range);
    out
}

enum Kind {
    Files(Vec<PathBuf>),
    Synthetic {
        shape: TensorShape,
        seed: u64,
        frames: Option<u64>,
    },
}

/// Yields frames from files or a generator, optionally rate-limited.
pub struct FrameSource {
    kind: Kind,
    next: u64,
    fps_cap: Option<f64>,
    last: Option<Instant>,
}

impl FrameSource {
    /// Every `.pgm` and `.satf` file in `dir`, in lexicographic order.
    pub fn directory(dir: impl AsRef<Path>) -> Result<Self> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if path.is_file() && matches!(ext, "pgm" | "satf") {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(Error::Config(format!(
                "no .pgm or .satf frames in {}",
                dir.as_ref().display()
            )));
        }
        files.sort();
        Ok(Self::files(files))
    }

    pub fn files(paths: Vec<PathBuf>) -> Self {
        Self::new(Kind::Files(paths))
    }

    /// `frames = None` generates forever.
    pub fn synthetic(shape: TensorShape, seed: u64, frames: Option<u64>) -> Self {
        Self::new(Kind::Synthetic {
            shape,
            seed,
            frames,
        })
    }

    fn new(kind: Kind) -> Self {
        Self {
            kind,
            next: 0,
            fps_cap: None,
            last: None,
        }
    }

    pub fn with_fps_cap(mut self, fps: Option<f64>) -> Self {
        self.fps_cap = fps.filter(|f| *f > 0.0);
        self
    }

    /// Index of the next frame to be produced.
    pub fn position(&self) -> u64 {
        self.next
    }

    /// Next frame, `None` once exhausted. A frame that fails to load is
    /// returned as an error and skipped on the following call.
    pub fn next_frame(&mut self) -> Option<Result<Tensor>> {
        let i = self.next;
        let item = match &self.kind {
            Kind::Files(paths) => {
                let path = paths.get(i as usize)?;
                read_any(path).map_err(|e| match e {
                    Error::Io(io) => Error::Io(std::io::Error::new(
                        io.kind(),
                        format!("{}: {io}", path.display()),
                    )),
                    other => Error::Format(format!("{}: {other}", path.display())),
                })
            }
            Kind::Synthetic {
                shape,
                seed,
                frames,
            } => {
                if frames.is_some_and(|n| i >= n) {
                    return None;
                }
                Ok(synthetic_texture(shape, *seed, i as f64))
            }
        };
        self.next += 1;
        self.throttle();
        Some(item)
    }

    fn throttle(&mut self) {
        if let Some(fps) = self.fps_cap {
            let period = Duration::from_secs_f64(1.0 / fps);
            if let Some(last) = self.last {
                let due = last + period;
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
            }
            self.last = Some(Instant::now());
        }
    }
}

impl Iterator for FrameSource {
    type Item = Result<Tensor>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_any;

    #[test]
    fn texture_is_deterministic_and_unit_range() {
        let shape = TensorShape::new(&[16, 12]).unwrap();
        let a = synthetic_texture(&shape, 5, 0.0);
        assert_eq!(a, synthetic_texture(&shape, 5, 0.0));
        assert_ne!(a, synthetic_texture(&shape, 6, 0.0));
        assert_ne!(a, synthetic_texture(&shape, 5, 1.0));
        let lo = a.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn synthetic_count() {
        let shape = TensorShape::new(&[4, 4, 3]).unwrap();
        let src = FrameSource::synthetic(shape, 1, Some(3));
        assert_eq!(src.count(), 3);
    }

    #[test]
    fn directory_order_and_bad_file() {
        let dir = tempfile::tempdir().unwrap();
        let shape = TensorShape::new(&[4, 4]).unwrap();
        for (name, t) in [("b.pgm", 0.0), ("a.pgm", 1.0)] {
            write_any(dir.path().join(name), &synthetic_texture(&shape, 1, t)).unwrap();
        }
        std::fs::write(dir.path().join("c.pgm"), b"junk").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let mut src = FrameSource::directory(dir.path()).unwrap();
        let first = src.next_frame().unwrap().unwrap();
        let expect = read_any(dir.path().join("a.pgm")).unwrap();
        assert_eq!(first, expect);
        assert!(src.next_frame().unwrap().is_ok());
        assert!(src.next_frame().unwrap().is_err());
        assert!(src.next_frame().is_none());
    }

    #[test]
    fn fps_cap_spaces_frames() {
        let shape = TensorShape::new(&[2, 2]).unwrap();
        let mut src = FrameSource::synthetic(shape, 1, Some(3)).with_fps_cap(Some(50.0));
        let start = Instant::now();
        while src.next_frame().is_some() {}
        assert!(start.elapsed() >= Duration::from_millis(38));
    }
}
