//! Counter-based randomness: every draw is a pure function of a key and a
//! counter, so results do not depend on iteration order or thread count.

use crate::lattice::EdgeId;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn hash2(key: u64, counter: u64) -> u64 {
    mix64(mix64(key.wrapping_add(GOLDEN)) ^ counter.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019))
}

/// Independent child seed for `(stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    hash2(hash2(seed, stream), index)
}

/// Maps 64 random bits to the open interval (0, 1).
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Uniform (0, 1) weight of `e` under `seed`.
#[inline]
pub fn edge_uniform(seed: u64, e: EdgeId) -> f64 {
    let xy = ((e.site.x as u32 as u64) << 32) | e.site.y as u32 as u64;
    let h = hash2(seed, xy);
    unit_open(mix64(h ^ (e.orientation.index() as u64 + 1).wrapping_mul(GOLDEN)))
}

/// Sequential stream over `hash2(key, 0), hash2(key, 1), ...`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = hash2(self.key, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_open(self.next_u64())
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}
