//! Portable seeded randomness.
//!
//! Row draws must replicate bit-for-bit in other languages, so everything
//! random in a [`SensingPlan`](crate::SensingPlan) goes through this module:
//!
//! * generator: xoshiro256** seeded from a `u64` through SplitMix64
//!   (the reference seeding of Blackman and Vigna);
//! * bounded integers: `(next_u64() as u128 * bound as u128) >> 64`
//!   (multiply-shift, no rejection step);
//! * shuffles: Fisher-Yates running from the last index down to 1, swapping
//!   index `i` with `bounded(i + 1)`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// Deterministic generator used for every seeded draw in the crate.
#[derive(Debug, Clone)]
pub struct PortableRng {
    inner: Xoshiro256StarStar,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn bounded(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.bounded(i + 1);
            items.swap(i, j);
        }
    }

    /// Access to the underlying generator for non-portable uses (noise).
    pub fn as_rng(&mut self) -> &mut Xoshiro256StarStar {
        &mut self.inner
    }
}
