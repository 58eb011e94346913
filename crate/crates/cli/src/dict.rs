use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inpaint_core::bpfa::{infer, transfer_dictionary, Hyperparams, InferOptions};
use inpaint_core::io::{read_any, read_dict, write_dict};
use inpaint_core::patches::{extract_patches, PatchMatrix};
use inpaint_core::sampling::{MaskRequest, SamplerSpec, StrategyRegistry};
use inpaint_core::tensor::normalize_observed;

use crate::inpaint::{patch_spec, InitMode};

#[derive(clap::Args)]
pub struct LearnArgs {
    /// Image files or directories of `.pgm`/`.satf` files.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Dictionary file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    patch: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    stride: Option<Vec<usize>>,
    #[arg(long, default_value_t = 64)]
    atoms: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of each training image observed.
    #[arg(long, default_value_t = 1.0)]
    mask_ratio: f64,
    #[arg(long, value_enum, default_value = "prior")]
    init: InitMode,
}

#[derive(clap::Args)]
pub struct TransferArgs {
    #[arg(long)]
    dict_in: PathBuf,
    #[arg(long)]
    dict_out: PathBuf,
    /// Destination patch shape.
    #[arg(long, value_delimiter = ',', required = true)]
    patch: Vec<usize>,
}

fn expand(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.is_file()
                        && f.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| e == "pgm" || e == "satf")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn training_patches(args: &LearnArgs, path: &Path, index: u64) -> Result<PatchMatrix> {
    let img = read_any(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = SamplerSpec::uniform(args.mask_ratio, args.seed)?;
    let mask = StrategyRegistry::default().select(&MaskRequest {
        shape: img.shape(),
        spec: &spec,
        previous: None,
        residual: None,
        frame: index,
    })?;
    let (x, _) = normalize_observed(&img, &mask)?;
    let patches = patch_spec(&args.patch, args.stride.as_deref())?;
    Ok(extract_patches(&x, &mask, &patches, true)?)
}

pub fn learn(args: LearnArgs) -> Result<()> {
    let files = expand(&args.inputs)?;
    if files.is_empty() {
        bail!(inpaint_core::Error::Config("no training images found".into()));
    }
    let parts = files
        .iter()
        .enumerate()
        .map(|(i, f)| training_patches(&args, f, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let pm = PatchMatrix::concat(&parts)?;
    log::info!("learning from {} patches of {} image(s)", pm.len(), files.len());
    let opts = InferOptions {
        epochs: args.epochs,
        seed: args.seed,
        init: args.init.into(),
        ..Default::default()
    };
    let out = infer(&pm, &Hyperparams::default().with_atoms(args.atoms), &opts)?;
    write_dict(&args.out, &out.state.dict)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

pub fn transfer(args: TransferArgs) -> Result<()> {
    let src = read_dict(&args.dict_in).with_context(|| format!("reading {}", args.dict_in.display()))?;
    let dst = transfer_dictionary(&src, &args.patch)?;
    write_dict(&args.dict_out, &dst)
        .with_context(|| format!("writing {}", args.dict_out.display()))?;
    Ok(())
}
