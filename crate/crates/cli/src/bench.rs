use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use inpaint_core::bpfa::{infer, Hyperparams, InferOptions};
use inpaint_core::io::{read_any, write_bench_csv, BenchRow};
use inpaint_core::patches::extract_patches;
use inpaint_core::pipeline::synthetic_texture;
use inpaint_core::sampling::{make_mask, SamplerSpec};
use inpaint_core::tensor::{normalize, Tensor, TensorShape};

use crate::inpaint::patch_spec;

#[derive(clap::Args)]
pub struct Args {
    /// Square image side lengths.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    atoms: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,10")]
    patch: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    stride: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    /// Sampling ratio of the uniform-random mask.
    #[arg(long, default_value_t = 0.2)]
    ratio: f64,
    /// Timed runs per size; the median is reported.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Crop each size from this image instead of the synthetic texture.
    #[arg(long)]
    input: Option<PathBuf>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn crop(img: &Tensor, n: usize) -> Result<Tensor> {
    let dims = img.shape().dims();
    if dims.len() != 2 || dims[0] < n || dims[1] < n {
        bail!(inpaint_core::Error::InvalidShape(format!(
            "input {} is too small for a {n}x{n} crop",
            img.shape()
        )));
    }
    Ok(Tensor::from_fn(TensorShape::new(&[n, n])?, |c| {
        img.get(&[c[0], c[1]])
    }))
}

pub fn run(args: Args) -> Result<()> {
    if args.repeats == 0 || args.epochs == 0 || args.sizes.is_empty() {
        bail!(inpaint_core::Error::Config(
            "--repeats, --epochs and --sizes must be non-empty and positive".into()
        ));
    }
    let source = match &args.input {
        Some(p) => Some(read_any(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let spec = patch_spec(&args.patch, Some(&args.stride))?;
    let hp = Hyperparams::default().with_atoms(args.atoms);
    let opts = InferOptions {
        epochs: args.epochs,
        seed: args.seed,
        ..Default::default()
    };

    let mut rows = Vec::new();
    for &n in &args.sizes {
        let shape = TensorShape::new(&[n, n])?;
        let img = match &source {
            Some(src) => normalize(&crop(src, n)?)?.0,
            None => synthetic_texture(&shape, args.seed, 0.0),
        };
        let mask = make_mask(&SamplerSpec::uniform(args.ratio, args.seed)?, &shape)?;
        let pm = extract_patches(&img, &mask, &spec, true)?;
        let times: Vec<f64> = (0..args.repeats)
            .map(|_| {
                let start = Instant::now();
                infer(&pm, &hp, &opts).map(|_| start.elapsed().as_secs_f64() * 1e3)
            })
            .collect::<Result<_, _>>()?;
        let wall_ms = median(times);
        log::info!("size {n}: {} patches, {wall_ms:.1} ms", pm.len());
        rows.push(BenchRow {
            size: n,
            patches: pm.len(),
            epochs: args.epochs,
            wall_ms,
            throughput_patches_per_s: (pm.len() * args.epochs) as f64 / (wall_ms / 1e3),
        });
    }

    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    let metadata: Vec<(String, String)> = [
        ("atoms", args.atoms.to_string()),
        ("patch", join(&args.patch)),
        ("stride", join(&args.stride)),
        ("ratio", args.ratio.to_string()),
        ("sampler", "uniform-random".to_string()),
        ("repeats", args.repeats.to_string()),
        ("seed", args.seed.to_string()),
        ("threads", rayon::current_num_threads().to_string()),
        (
            "image",
            args.input
                .as_ref()
                .map_or("synthetic".to_string(), |p| p.display().to_string()),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    match &args.out {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = io::BufWriter::new(f);
            write_bench_csv(&mut w, &metadata, &rows)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_bench_csv(&mut lock, &metadata, &rows)?;
            lock.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::median;

    #[test]
    fn median_of_repeats() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
    }
}
