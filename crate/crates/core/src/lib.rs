//! Masked beta-process factor analysis for inpainting subsampled signals.
//!
//! Frames are cut into overlapping patches, only the observed entries of
//! each patch are kept, and a Gibbs sampler learns a dictionary together
//! with sparse codes from those entries alone. Averaging the overlapping
//! patch estimates gives the reconstruction.
//!
//! ```
//! use inpaint_core::bpfa::{infer, Hyperparams, InferOptions};
//! use inpaint_core::patches::{extract_patches, reconstitute, Coverage, PatchSpec};
//! use inpaint_core::pipeline::synthetic_texture;
//! use inpaint_core::sampling::{make_mask, SamplerSpec};
//! use inpaint_core::tensor::TensorShape;
//!
//! let shape = TensorShape::new(&[24, 24]).unwrap();
//! let image = synthetic_texture(&shape, 1, 0.0);
//! let mask = make_mask(&SamplerSpec::uniform(0.5, 7).unwrap(), &shape).unwrap();
//! let spec = PatchSpec::dense(&[4, 4]).unwrap();
//! let pm = extract_patches(&image, &mask, &spec, true).unwrap();
//! let opts = InferOptions { epochs: 5, ..Default::default() };
//! let out = infer(&pm, &Hyperparams::default().with_atoms(8), &opts).unwrap();
//! let recon = reconstitute(&pm, &out.estimates, Coverage::Strict).unwrap();
//! assert_eq!(recon.tensor.shape(), &shape);
//! ```

pub mod bpfa;
pub mod error;
pub mod io;
pub mod metrics;
pub mod patches;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/patches.md")]
    mod patches {}
    #[doc = include_str!("../../../book/src/sampler.md")]
    mod sampler {}
    #[doc = include_str!("../../../book/src/determinism.md")]
    mod determinism {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
