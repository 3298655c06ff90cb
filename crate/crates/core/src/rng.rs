//! Named, splittable random streams.
//!
//! Every random decision in the crate flows from one base seed through a
//! derivation path of `u64` words (replicate index, stage index, horizon
//! ordinal, ...). Two streams derived with different paths are independent;
//! the same `(base, path)` always yields the same stream, regardless of how
//! many other streams were consumed in between. This is what makes parallel
//! execution bit-identical to sequential execution.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Domain words used as the first element of derivation paths, so that
/// different subsystems can never collide on a path.
pub mod domain {
    pub const RECIPE: u64 = 0x01;
    pub const REPEAT: u64 = 0x02;
    pub const HORIZON_FIT: u64 = 0x03;
    pub const FOLD_FIT: u64 = 0x04;
    pub const SPLIT_FIT: u64 = 0x05;
    pub const REPLICATE: u64 = 0x06;
    pub const RETRY: u64 = 0x07;
    pub const STAGE: u64 = 0x08;
    pub const SWEEP_CELL: u64 = 0x09;
    pub const SYNTH_EFFECTS: u64 = 0x20;
    pub const SYNTH_TRAJECTORY: u64 = 0x21;
    pub const SYNTH_ROSTER: u64 = 0x22;
    pub const SYNTH_OUTCOME: u64 = 0x23;
    pub const SYNTH_CALIBRATION: u64 = 0x24;
}

/// SplitMix64 finalizer; a good 64-bit mixing function.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Derive a child seed from `base` and a path of words.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = mix(base.wrapping_add(GOLDEN));
    for (i, w) in path.iter().enumerate() {
        h ^= mix(w.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
        h = mix(h);
    }
    h
}

/// A seeded stream that remembers its own seed (for provenance records)
/// and can split off independent child streams.
#[derive(Clone, Debug)]
pub struct SeedStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Split off an independent stream named by `path`.
    pub fn derive(&self, path: &[u64]) -> SeedStream {
        SeedStream::new(derive_seed(self.seed, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
