//! Deterministic random streams.
//!
//! All randomness in the toolkit comes from ChaCha8 (the 8-round ChaCha
//! stream cipher used as a PRNG). A run seed is expanded with
//! `ChaCha8Rng::seed_from_u64`, and independent substreams are selected with
//! the cipher's 64-bit stream counter. A substream id is built from a list
//! of small integers (class, matcher, setting, ...) by [`stream_id`], so the
//! draws for one `(class, matcher)` pair never depend on how many values were
//! drawn for another pair.
//!
//! Uniforms are formed from the top 53 bits of each `u64` word as
//! `(k + 0.5) / 2^53`, which lies strictly inside `(0, 1)`. Standard normal
//! variates use the inverse-CDF transform of one uniform each.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

/// A seeded ChaCha8 substream.
pub struct Stream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl Stream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Stream {
            rng,
            normal: Normal::standard(),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in the open interval `(0, 1)`.
    pub fn open_unit(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Standard normal draw by inverse-CDF transform.
    pub fn standard_normal(&mut self) -> f64 {
        let u = self.open_unit();
        self.normal.inverse_cdf(u)
    }

    /// Uniform index in `0..bound` by 128-bit multiply-shift. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.rng.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Fisher–Yates shuffle, walking from the last position down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Combine substream components into one 64-bit stream id.
///
/// Each component is folded in with the SplitMix64 finaliser, so distinct
/// component lists map to distinct ids with overwhelming probability.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x5EED_F00D_CAFE_D00D;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

/// Derive a child seed from a parent seed and a list of components.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
