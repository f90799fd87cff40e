//! Seeded, splittable randomness.
//!
//! Substreams are derived from the seed alone, never from how much of the
//! parent stream has been consumed, so adding draws in one subsystem cannot
//! perturb another.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent named substream, e.g. `"sim"`, `"data"`, `"planner"`.
    pub fn substream(&self, name: &str) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(fnv1a(name.as_bytes()))))
    }

    /// Independent indexed substream (trial `i`, episode `i`, ...).
    pub fn fork(&self, index: u64) -> Rng {
        Rng::new(splitmix64(splitmix64(self.seed).wrapping_add(index)))
    }

    /// Fresh seed drawn from this stream; consumes state.
    pub fn next_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
