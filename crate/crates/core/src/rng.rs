//! Seedable, splittable random streams.
//!
//! Every stochastic operation takes an explicit [`RngStream`]. Child streams are
//! derived from a parent seed and a tag through SplitMix64 mixing, so two callers
//! that split with different tags never share a sequence and a fixed seed always
//! reproduces the same draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Tags for the top-level streams used by the experiment harness.
pub mod tags {
    pub const GENERATE: u64 = 0x6765_6e65_7261_7465;
    pub const LEARN: u64 = 0x6c65_6172_6e00_0000;
    pub const AUDIT: u64 = 0x6175_6469_7400_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha20 generator tagged with the seed it was created from.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream. Depends only on this stream's seed and
    /// `tag`, never on how many values were already drawn.
    pub fn split(&self, tag: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(tag)))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
