//! Seed derivation and random streams.
//!
//! Child seeds come from a splitmix64 step, `mix64(parent + (i + 1)·GOLDEN)`,
//! so any task can rebuild its stream from `(parent, i)` alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 increment (2⁶⁴ divided by the golden ratio).
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags for hierarchical derivation.
pub const TAG_DESIGN: u64 = 0xD5;
pub const TAG_ERRORS: u64 = 0xE1;
pub const TAG_BOOTSTRAP: u64 = 0xB0;
pub const TAG_REPS: u64 = 0x4E;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child `index` under `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Seed of child `index` in the stream `tag` under `parent`.
pub fn derive_tagged(parent: u64, tag: u64, index: u64) -> u64 {
    derive_seed(derive_seed(parent, tag), index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..n` by scaling a 64-bit draw (inverse CDF of the discrete uniform).
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}
