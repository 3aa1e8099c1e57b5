//! Seeded random streams.
//!
//! All randomness goes through [`SeededRng`] (ChaCha8). Independent streams
//! for different purposes are derived from one user seed with [`derive_seed`]
//! so that, for example, adding a dropout draw never perturbs the sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream tag (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, tag: u64) -> SeededRng {
    seeded(derive_seed(seed, tag))
}

// Stream tags.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_DROPOUT: u64 = 2;
pub(crate) const TAG_SAMPLER_A: u64 = 3;
pub(crate) const TAG_SAMPLER_B: u64 = 4;
