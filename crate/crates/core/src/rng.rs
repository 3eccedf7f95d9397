//! Deterministic, splittable randomness.
//!
//! Every stochastic operation in this crate takes an explicit [`SeededRng`].
//! A generator is identified by a 64-bit seed: the same seed always yields
//! the same stream. [`SeededRng::fork`] derives an independent child stream
//! from `(seed, label)` with a SplitMix64 hash of the label tuple, so a
//! pipeline can hand out generators for trees, replicates, and experiment
//! cells without any coordination, and parallel execution cannot change the
//! numbers drawn by any unit of work.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; maps u64 -> u64 with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A ChaCha8 stream keyed by a 64-bit seed, with deterministic forking.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this generator was created with (not its current position).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child seed for `(self.seed, label)`. Exposed so callers can record
    /// the seed of a unit of work (e.g. in experiment output rows).
    pub fn child_seed(&self, label: &[u64]) -> u64 {
        // Fold the label length first so (a) and (a, 0) never collide.
        let mut s = splitmix64(self.seed ^ splitmix64(label.len() as u64));
        for &part in label {
            s = splitmix64(s ^ splitmix64(part));
        }
        s
    }

    /// Independent child stream, deterministic in `(seed, label)` and
    /// unaffected by how much of the parent stream has been consumed.
    pub fn fork(&self, label: &[u64]) -> SeededRng {
        SeededRng::new(self.child_seed(label))
    }

    /// Uniform draw from the open interval `(lo, hi)`.
    ///
    /// Both endpoints are excluded so a split threshold can never pin an
    /// entire node to one side.
    pub fn open_range(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo < hi);
        loop {
            let u: f64 = rand::Rng::random(&mut self.inner);
            if u > 0.0 {
                let x = lo + u * (hi - lo);
                if x > lo && x < hi {
                    return x;
                }
            }
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
