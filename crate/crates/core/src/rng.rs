//! Seed derivation for reproducible, parallelism-independent randomness.
//!
//! Every random stream is a `ChaCha8Rng` keyed by a 64-bit seed obtained by
//! folding a parent seed with a path of integers (slot index, tree index,
//! subset index, ...) through the SplitMix64 finaliser. Work items therefore
//! own their stream and can be evaluated in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 output function.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of stream coordinates.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

/// Generator for the substream identified by `path` under `seed`.
pub fn substream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Seeded generator with no substream path.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(mix(seed))
}
