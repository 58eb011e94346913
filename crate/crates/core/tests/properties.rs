use inpaint_core::bpfa::{infer, Hyperparams, InferOptions};
use inpaint_core::io::{decode_tensor, encode_tensor, Dtype};
use inpaint_core::patches::{
    extract_patches, reconstitute, Coverage, PatchEstimates, PatchSpec,
};
use inpaint_core::sampling::{make_mask, target_count, SamplerSpec};
use inpaint_core::tensor::{
    apply_data_consistency, normalize_observed, SampleMask, Tensor, TensorShape,
};
use proptest::prelude::*;

/// Tensor dims with a patch shape and stride that fit them.
fn geometry() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>)> {
    prop::collection::vec((1usize..=9, 1usize..=4, 1usize..=3), 1..=3).prop_map(|dims| {
        let mut shape = Vec::new();
        let mut patch = Vec::new();
        let mut stride = Vec::new();
        for (m, b, s) in dims {
            let b = b.min(m);
            shape.push(m);
            patch.push(b);
            stride.push(s);
        }
        (shape, patch, stride)
    })
}

fn tensor_and_mask(dims: &[usize], seed: u64, ratio: f64) -> (Tensor, SampleMask) {
    let shape = TensorShape::new(dims).unwrap();
    let t = Tensor::from_fn(shape.clone(), |c| {
        c.iter()
            .enumerate()
            .map(|(d, &v)| ((v * (d + 3) + seed as usize) % 11) as f64 / 10.0)
            .sum::<f64>()
    });
    let mask = make_mask(&SamplerSpec::uniform(ratio, seed).unwrap(), &shape).unwrap();
    (t, mask)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patch_count_matches_enumeration((dims, patch, stride) in geometry()) {
        let shape = TensorShape::new(&dims).unwrap();
        let spec = PatchSpec::new(&patch, &stride).unwrap();
        let mut brute = 0;
        for flat in 0..shape.len() {
            let c = shape.coords(flat);
            let fits = c.iter().zip(&dims).zip(&patch).zip(&stride).all(|(((&ci, &m), &b), &s)| {
                ci % s == 0 && ci + b <= m
            });
            brute += fits as usize;
        }
        prop_assert_eq!(spec.patch_count(&shape).unwrap(), brute);
    }

    #[test]
    fn extraction_ignores_unobserved_values(
        (dims, patch, stride) in geometry(),
        seed in 0u64..1000,
        ratio in 0.0f64..=1.0,
        noise in -100.0f64..100.0,
        mean_subtract: bool,
    ) {
        let (t, mask) = tensor_and_mask(&dims, seed, ratio);
        let spec = PatchSpec::new(&patch, &stride).unwrap();
        let mut other = t.clone();
        for (i, v) in other.data_mut().iter_mut().enumerate() {
            if !mask.is_observed(i) {
                *v = noise + i as f64;
            }
        }
        prop_assert_eq!(
            extract_patches(&t, &mask, &spec, mean_subtract).unwrap(),
            extract_patches(&other, &mask, &spec, mean_subtract).unwrap()
        );
        let (a, na) = normalize_observed(&t, &mask).unwrap();
        let (b, nb) = normalize_observed(&other, &mask).unwrap();
        prop_assert_eq!(na, nb);
        for i in (0..t.data().len()).filter(|&i| mask.is_observed(i)) {
            prop_assert_eq!(a.data()[i], b.data()[i]);
        }
    }

    #[test]
    fn dense_grid_roundtrip(dims in prop::collection::vec(1usize..=8, 1..=3), seed in 0u64..100, mean_subtract: bool) {
        let patch: Vec<usize> = dims.iter().map(|&m| m.min(3)).collect();
        let (t, _) = tensor_and_mask(&dims, seed, 1.0);
        let full = SampleMask::full(t.shape().clone());
        let spec = PatchSpec::dense(&patch).unwrap();
        let pm = extract_patches(&t, &full, &spec, mean_subtract).unwrap();
        let est = PatchEstimates::new(pm.patch_len(), pm.dense_values()).unwrap();
        let back = reconstitute(&pm, &est, Coverage::Strict).unwrap();
        prop_assert_eq!(back.uncovered, 0);
        for (a, b) in back.tensor.data().iter().zip(t.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_mask_has_exact_count(dims in prop::collection::vec(1usize..=12, 1..=3), ratio in 0.0f64..=1.0, seed: u64) {
        let shape = TensorShape::new(&dims).unwrap();
        let spec = SamplerSpec::uniform(ratio, seed).unwrap();
        let m = make_mask(&spec, &shape).unwrap();
        prop_assert_eq!(m.count(), target_count(ratio, shape.len()));
        prop_assert_eq!(m, make_mask(&spec, &shape).unwrap());
    }

    #[test]
    fn data_consistency_keeps_measurements(dims in prop::collection::vec(1usize..=8, 1..=2), seed in 0u64..100, ratio in 0.0f64..=1.0) {
        let (t, mask) = tensor_and_mask(&dims, seed, ratio);
        let recon = Tensor::from_fn(t.shape().clone(), |c| c.iter().sum::<usize>() as f64 * -0.5);
        let out = apply_data_consistency(&recon, &t, &mask, true).unwrap();
        for i in 0..t.data().len() {
            let want = if mask.is_observed(i) { t.data()[i] } else { recon.data()[i] };
            prop_assert_eq!(out.data()[i], want);
        }
    }

    #[test]
    fn satf_roundtrip(dims in prop::collection::vec(1usize..=5, 1..=4), values in prop::collection::vec(-1e6f32..1e6, 625)) {
        let shape = TensorShape::new(&dims).unwrap();
        let data: Vec<f64> = values.iter().take(shape.len()).map(|&v| v as f64).collect();
        let t = Tensor::new(shape, data).unwrap();
        prop_assert_eq!(decode_tensor(&encode_tensor(&t, Dtype::F32).unwrap()).unwrap(), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inference_is_deterministic_and_mask_blind(seed in 0u64..1000, noise in -10.0f64..10.0) {
        let (t, mask) = tensor_and_mask(&[12, 12], seed, 0.4);
        let spec = PatchSpec::dense(&[4, 4]).unwrap();
        let mut other = t.clone();
        for (i, v) in other.data_mut().iter_mut().enumerate() {
            if !mask.is_observed(i) {
                *v = noise;
            }
        }
        let hp = Hyperparams::default().with_atoms(6);
        let opts = InferOptions { epochs: 3, seed, ..Default::default() };
        let a = infer(&extract_patches(&t, &mask, &spec, true).unwrap(), &hp, &opts).unwrap();
        let b = infer(&extract_patches(&other, &mask, &spec, true).unwrap(), &hp, &opts).unwrap();
        prop_assert_eq!(&a.state, &b.state);
        prop_assert_eq!(a.estimates.values(), b.estimates.values());
        prop_assert_eq!(a.state.epoch, 3);
    }
}
