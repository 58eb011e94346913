//! Counter-based random streams.
//!
//! Every random draw in the engine comes from a ChaCha8 keystream addressed
//! by `(seed, epoch, class)` as the key and an `index` as the stream id, so a
//! variable's draws depend only on its address and never on which worker
//! produced it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which family of variables a stream feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamClass {
    Atom = 1,
    Code = 2,
    Pi = 3,
    GammaS = 4,
    GammaEps = 5,
    Init = 6,
    Mask = 7,
}

/// Opens the stream for `(seed, epoch, class, index)`.
pub fn stream(seed: u64, epoch: u64, class: StreamClass, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&(class as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// `count` uniform 64-bit keys where key `e` depends only on the address and
/// on `e` itself (it is the `e`-th word pair of the stream).
pub fn element_keys(seed: u64, epoch: u64, index: u64, count: usize) -> Vec<u64> {
    let mut rng = stream(seed, epoch, StreamClass::Mask, index);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Uniform draw in the open interval (0, 1).
pub(crate) fn open01(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |mut r: ChaCha8Rng| (0..4).map(|_| r.next_u64()).collect::<Vec<_>>();
        let a = draw(stream(1, 2, StreamClass::Code, 3));
        assert_eq!(a, draw(stream(1, 2, StreamClass::Code, 3)));
        let mut other = stream(1, 2, StreamClass::Code, 4);
        assert_ne!(a[0], other.next_u64());
        let mut other = stream(1, 3, StreamClass::Code, 3);
        assert_ne!(a[0], other.next_u64());
        let mut other = stream(1, 2, StreamClass::Atom, 3);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn element_keys_are_random_access() {
        let all = element_keys(9, 0, 1, 100);
        let mut rng = stream(9, 0, StreamClass::Mask, 1);
        rng.set_word_pos(2 * 37);
        assert_eq!(rng.next_u64(), all[37]);
    }

    #[test]
    fn open01_bounds() {
        let mut rng = stream(0, 0, StreamClass::Init, 0);
        for _ in 0..10_000 {
            let u = open01(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
