//! Seed derivation.
//!
//! Every stochastic stage draws from a [`ChaCha8Rng`] seeded by a value derived
//! from the user seed with a counter-based split, so adding a realization or a
//! mask never reshuffles the earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent stages from sharing derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Realization = 1,
    Masks = 2,
    Coalitions = 3,
    Dropout = 4,
    Corpus = 5,
    Weights = 6,
    Randomize = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for item `index` of `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let s = splitmix64(seed ^ splitmix64(stream as u64));
    splitmix64(s ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    rng_from(derive_seed(seed, stream, index))
}
