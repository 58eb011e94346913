use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use inpaint_core::bpfa::{
    estimates, infer_with, Hyperparams, InferOptions, InitMode as CoreInit,
};
use inpaint_core::io::{read_any, read_dict, write_any, write_dict};
use inpaint_core::metrics::{model_stats, psnr, Db, UNIT_PEAK};
use inpaint_core::patches::{extract_patches, reconstitute, Coverage, PatchSpec};
use inpaint_core::sampling::{MaskRequest, SamplerSpec, StrategyRegistry};
use inpaint_core::tensor::{apply_data_consistency, normalize_observed, SampleMask, TensorShape};

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum InitMode {
    Prior,
    Data,
}

impl From<InitMode> for CoreInit {
    fn from(m: InitMode) -> Self {
        match m {
            InitMode::Prior => CoreInit::Prior,
            InitMode::Data => CoreInit::Data,
        }
    }
}

pub fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, found {s:?}"))
}

#[derive(clap::Args)]
pub struct Args {
    /// Image (PGM) or tensor (SATF) to reconstruct.
    #[arg(long)]
    input: PathBuf,
    /// Output path; `.pgm` writes an 8-bit image, anything else SATF.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of elements observed (default 1.0 when no mask is given).
    #[arg(long, conflicts_with = "mask")]
    mask_ratio: Option<f64>,
    /// Tensor whose non-zero elements mark observed positions.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Mask strategy used with --mask-ratio.
    #[arg(long, default_value = "uniform-random")]
    sampler: String,
    /// Extra strategy parameter, e.g. `tile=8,8`.
    #[arg(long = "sampler-param", value_parser = parse_kv)]
    sampler_params: Vec<(String, String)>,
    #[arg(long, value_delimiter = ',', required = true)]
    patch: Vec<usize>,
    /// Defaults to 1 along every dimension.
    #[arg(long, value_delimiter = ',')]
    stride: Option<Vec<usize>>,
    #[arg(long, default_value_t = 64)]
    atoms: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "prior")]
    init: InitMode,
    /// Average the estimates of the last N sweeps.
    #[arg(long, default_value_t = 1)]
    tail: usize,
    #[arg(long)]
    dict_in: Option<PathBuf>,
    /// Keep the --dict-in atoms fixed and only fit codes.
    #[arg(long, requires = "dict_in")]
    freeze_dict: bool,
    #[arg(long)]
    dict_out: Option<PathBuf>,
    /// Reference for PSNR.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    no_mean_subtract: bool,
    #[arg(long)]
    no_data_consistency: bool,
    /// Per-sweep statistics.
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
}

fn load_mask(args: &Args, shape: &TensorShape) -> Result<SampleMask> {
    if let Some(path) = &args.mask {
        let m = read_any(path).with_context(|| format!("reading mask {}", path.display()))?;
        m.shape().ensure_eq(shape)?;
        let observed = m.data().iter().map(|&v| v > 0.0).collect();
        return Ok(SampleMask::new(shape.clone(), observed)?);
    }
    let spec = SamplerSpec {
        strategy: args.sampler.clone(),
        ratio: args.mask_ratio.unwrap_or(1.0),
        seed: args.seed,
        params: args.sampler_params.iter().cloned().collect(),
    };
    Ok(StrategyRegistry::default().select(&MaskRequest {
        shape,
        spec: &spec,
        previous: None,
        residual: None,
        frame: 0,
    })?)
}

pub fn patch_spec(patch: &[usize], stride: Option<&[usize]>) -> Result<PatchSpec> {
    Ok(match stride {
        Some(s) => PatchSpec::new(patch, s)?,
        None => PatchSpec::dense(patch)?,
    })
}

pub fn run(args: Args) -> Result<()> {
    if args.epochs == 0 {
        bail!(inpaint_core::Error::Config("--epochs must be at least 1".into()));
    }
    let input = read_any(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let shape = input.shape().clone();
    let mask = load_mask(&args, &shape)?;
    let (x, norm) = normalize_observed(&input, &mask)?;
    let truth = match &args.gt {
        Some(p) => {
            let gt = read_any(p).with_context(|| format!("reading {}", p.display()))?;
            gt.shape().ensure_eq(&shape)?;
            Some(norm.apply(&gt))
        }
        None => None,
    };

    let spec = patch_spec(&args.patch, args.stride.as_deref())?;
    let pm = extract_patches(&x, &mask, &spec, !args.no_mean_subtract)?;
    let initial_dict = match &args.dict_in {
        Some(p) => Some(read_dict(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let hp = Hyperparams::default().with_atoms(args.atoms);
    let opts = InferOptions {
        epochs: args.epochs,
        seed: args.seed,
        freeze_dict: args.freeze_dict,
        init: args.init.into(),
        initial_dict,
        tail_average: args.tail,
    };

    let mut csv = match &args.metrics_csv {
        Some(p) => {
            let mut w = BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            );
            writeln!(w, "epoch,masked_mse,psnr_db,atoms_per_patch,gamma_s,gamma_eps")?;
            Some(w)
        }
        None => None,
    };
    let mut csv_err = None;
    let data_consistency = !args.no_data_consistency;
    let out = infer_with(&pm, &hp, &opts, |r| {
        let Some(w) = csv.as_mut() else { return };
        let db = truth.as_ref().map(|gt| {
            let est = estimates(r.state, pm.patch_len());
            reconstitute(&pm, &est, Coverage::Lenient)
                .and_then(|rec| apply_data_consistency(&rec.tensor, &x, &mask, data_consistency))
                .and_then(|rec| psnr(&rec, gt, UNIT_PEAK))
        });
        let db = match db.transpose() {
            Ok(v) => v.map(|d| Db(d).to_string()).unwrap_or_default(),
            Err(e) => {
                csv_err.get_or_insert(anyhow::Error::from(e));
                return;
            }
        };
        let stats = model_stats(r.state);
        if let Err(e) = writeln!(
            w,
            "{},{},{},{},{},{}",
            r.state.epoch,
            r.stats.masked_mse(),
            db,
            stats.atoms_per_patch,
            stats.gamma_s,
            stats.gamma_eps
        ) {
            csv_err.get_or_insert(e.into());
        }
    })?;
    if let Some(e) = csv_err {
        return Err(e);
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }

    let rec = reconstitute(&pm, &out.estimates, Coverage::Lenient)?;
    if rec.uncovered > 0 {
        log::warn!(
            "{} element(s) are not covered by any patch; they keep the observed value or zero",
            rec.uncovered
        );
    }
    let recon = apply_data_consistency(&rec.tensor, &x, &mask, data_consistency)?;
    if let Some(gt) = &truth {
        println!("PSNR: {:.2} dB", Db(psnr(&recon, gt, UNIT_PEAK)?));
    }
    write_any(&args.out, &norm.invert(&recon))
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(p) = &args.dict_out {
        write_dict(p, &out.state.dict).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
