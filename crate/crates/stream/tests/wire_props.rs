use inpaint_core::bpfa::Dictionary;
use inpaint_stream::wire::{quantize, HEADER_LEN};
use inpaint_stream::{render_dictionary_atlas, FrameType, WireFrame};
use proptest::prelude::*;

fn frame_type() -> impl Strategy<Value = FrameType> {
    (0u8..4).prop_map(|v| FrameType::from_u8(v).unwrap())
}

fn frame() -> impl Strategy<Value = WireFrame> {
    (frame_type(), any::<u16>(), 1u32..20, 1u32..20, any::<u32>()).prop_flat_map(
        |(kind, problem_id, width, height, frame_id)| {
            prop::collection::vec(any::<u8>(), (width * height) as usize).prop_map(move |payload| {
                WireFrame {
                    kind,
                    problem_id,
                    width,
                    height,
                    frame_id,
                    payload,
                }
            })
        },
    )
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(f in frame()) {
        let bytes = f.encode();
        prop_assert_eq!(bytes.len(), HEADER_LEN + f.payload.len());
        prop_assert_eq!(WireFrame::decode(&bytes).unwrap(), f);
    }

    #[test]
    fn truncated_or_padded_frames_are_rejected(f in frame(), cut in 1usize..40, extra in 1usize..4) {
        let bytes = f.encode();
        let cut = cut.min(bytes.len());
        prop_assert!(WireFrame::decode(&bytes[..bytes.len() - cut]).is_err());
        let mut padded = bytes.clone();
        padded.extend(std::iter::repeat_n(0u8, extra));
        prop_assert!(WireFrame::decode(&padded).is_err());
    }

    #[test]
    fn quantize_is_monotone(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo) <= quantize(hi));
    }

    #[test]
    fn atlas_size_follows_grid(k in 1usize..40, bh in 1usize..6, bw in 1usize..6) {
        let atoms = (0..k * bh * bw).map(|v| (v as f64).sin()).collect();
        let dict = Dictionary::new(vec![bh, bw], atoms, vec![0.5; k]).unwrap();
        let atlas = render_dictionary_atlas(&dict);
        let g = (k as f64).sqrt().ceil() as usize;
        prop_assert_eq!(atlas.width as usize, g * bw + g - 1);
        prop_assert_eq!(atlas.height as usize, g * bh + g - 1);
        prop_assert_eq!(atlas.pixels.len(), (atlas.width * atlas.height) as usize);
    }
}
