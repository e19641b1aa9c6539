//! Deterministic splittable seeding.
//!
//! Every randomized component derives its own independent stream from one
//! master [`RngSeed`] by name (and optionally by index), so adding a consumer
//! never shifts the stream seen by another. Streams are ChaCha8, which is
//! counter-based and produces bit-identical output across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A master seed from which named substreams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed(seed)
    }

    /// Derive an independent named substream seed.
    pub fn derive(&self, label: &str) -> RngSeed {
        let mut h = FNV_OFFSET;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        RngSeed(splitmix64(self.0 ^ splitmix64(h)))
    }

    /// Derive an indexed substream seed (e.g. one per layer or per trial).
    pub fn derive_index(&self, index: u64) -> RngSeed {
        RngSeed(splitmix64(self.0.wrapping_add(splitmix64(index ^ 0xa076_1d64_78bd_642f))))
    }

    /// Instantiate the stream for this seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn identical_seed_identical_stream() {
        let mut a = RngSeed::new(42).rng();
        let mut b = RngSeed::new(42).rng();
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn stream_values_are_pinned() {
        // Freezes the cross-platform contract: if these change, serialized
        // scenarios and reports generated from seeds change too.
        let mut r = RngSeed::new(7).rng();
        assert_eq!(r.next_u64(), 0x2865_5334_23d7_43bb);
    }

    #[test]
    fn derived_streams_differ_by_label_and_index() {
        let root = RngSeed::new(1);
        let a = root.derive("weights");
        let b = root.derive("scenario");
        assert_ne!(a.0, b.0);
        assert_ne!(root.derive_index(0).0, root.derive_index(1).0);
        // Same derivation is stable.
        assert_eq!(a.0, root.derive("weights").0);
    }
}
