//! Counter-keyed splittable random streams.
//!
//! Every stream is a pure function of the triple
//! `(master_seed, path_index, slot)`: the triple is absorbed through a
//! SplitMix64 chain into a 256-bit ChaCha8 key. A path owns the family
//! of slots `(master_seed, path_index, ·)` — slot 0 seeds the initial
//! value, slot k the k-th generation — so any path, and any generation
//! within it, can be regenerated in isolation regardless of how many
//! draws the other slots consumed. Streams are never shared between
//! threads; parallel code hands each worker its own keys.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(z: u64) -> u64 {
    let z = z.wrapping_add(GOLDEN);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(master_seed: u64, path_index: u64, slot: u64) -> [u8; 32] {
    let mut state = mix(mix(mix(master_seed) ^ path_index) ^ slot);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    key
}

/// Identifies the stream family of one simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
        }
    }

    /// The independent substream for one slot of this path.
    pub fn slot(&self, slot: u64) -> RandomStream {
        RandomStream::from_parts(self.master_seed, self.path_index, slot)
    }
}

/// A single deterministic stream of uniform variates.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_parts(master_seed: u64, path_index: u64, slot: u64) -> Self {
        Self {
            rng: ChaCha8Rng::from_seed(derive_key(master_seed, path_index, slot)),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform on (0, 1); safe to pass to `ln`.
    #[inline]
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}
