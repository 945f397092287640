//! Reproducible per-trajectory random streams.
//!
//! Each trajectory owns a [`Stream`] derived purely from
//! `(master_seed, stream_id)`: the master seed is expanded into a ChaCha8 key
//! and the stream id selects the ChaCha stream, so two ids never share state
//! and the sequence does not depend on which thread runs the trajectory.
//!
//! Step components ±1/2 come from single bits of the stream; a Bernoulli
//! choice consumes one 64-bit word.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Slack allowed on a probability before it is rejected.
const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        SeedSpec { master_seed, stream_id }
    }
}

#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    bits: u64,
    bits_left: u32,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for one trajectory. Pure function of the seed pair.
pub fn derive_stream(seed: SeedSpec) -> Stream {
    let mut key = [0u8; 32];
    let mut state = seed.master_seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(seed.stream_id);
    Stream {
        rng,
        bits: 0,
        bits_left: 0,
    }
}

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// One fair bit.
    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.bits_left == 0 {
            self.bits = self.rng.next_u64();
            self.bits_left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.bits_left -= 1;
        b
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fills `out` with independent ±1/2 components, one bit each.
    #[inline]
    pub fn fill_rademacher(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = if self.next_bit() { 0.5 } else { -0.5 };
        }
    }

    /// A step vector ξ ∈ {±1/2}^d.
    pub fn rademacher_step(&mut self, d: usize) -> Vec<f64> {
        let mut xi = vec![0.0; d];
        self.fill_rademacher(&mut xi);
        xi
    }

    /// True with probability `p`. Values within 1e-12 outside [0, 1] are
    /// clamped; anything further out is a usage error.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
            return usage(format!("probability {p} outside [0, 1]"));
        }
        Ok(self.bernoulli_unchecked(p))
    }

    #[inline]
    pub(crate) fn bernoulli_unchecked(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
