//! Reproducible randomness.
//!
//! The generator is ChaCha8 (the `rand_chacha` reference implementation),
//! seeded through `SeedableRng::seed_from_u64`. Both are fixed, documented
//! algorithms with no platform-dependent state, so a seed names the same
//! stream everywhere. Uniform reals take the top 53 bits of one `u64`
//! draw; a Bernoulli bit is `u < keep_prob` on such a uniform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SwdError};

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to derive child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream. Depends only on the parent seed and
    /// `stream`, never on how much of the parent has been consumed.
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(mix64(self.seed ^ mix64(stream)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (multiply-shift reduction).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one value per two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, keep_prob: f64) -> bool {
        self.uniform() < keep_prob
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `k` independent bits, each 1 with probability `keep_prob`.
pub fn bernoulli_bits(rng: &mut SeededRng, k: usize, keep_prob: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&keep_prob) {
        return Err(SwdError::InvalidArgument(format!(
            "keep probability {keep_prob} outside [0, 1]"
        )));
    }
    Ok((0..k).map(|_| rng.bernoulli(keep_prob)).collect())
}
