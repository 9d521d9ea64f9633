//! Seeded random number generation with reproducible stream splitting.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to derive child seeds from (seed, tag) pairs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// ChaCha8-backed generator. `fork(tag)` derives an independent child stream
/// from the parent's seed and the tag alone, so the set of streams a run uses
/// depends only on the root seed and the (deterministic) sequence of tags,
/// never on how many values any one stream has produced.
#[derive(Debug, Clone)]
pub struct SplitRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fork(&self, tag: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(tag)))
    }

    /// Two-level fork for call sites indexed by (kind, counter).
    pub fn fork2(&self, tag: u64, index: u64) -> Self {
        self.fork(splitmix64(tag).wrapping_add(index))
    }
}

impl RngCore for SplitRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
