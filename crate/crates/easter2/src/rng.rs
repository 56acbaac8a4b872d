//! Seeded random number generation.
//!
//! Every stochastic component (weight init, dropout, augmentation, shuffling)
//! draws from a ChaCha8 stream derived from an explicit seed, so identical
//! seeds reproduce identical runs bit for bit. Substreams are derived by
//! mixing tags into the seed rather than by advancing a shared generator,
//! which keeps e.g. epoch 7's batches independent of whether epochs 0..6
//! were replayed or restored from a checkpoint.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the engine.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby tag values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Root generator for a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for `(seed, tags...)`, e.g. `(seed, epoch, batch)`.
pub fn rng_stream(seed: u64, tags: &[u64]) -> Rng {
    let mut acc = mix(seed);
    for &t in tags {
        acc = mix(acc ^ mix(t));
    }
    ChaCha8Rng::seed_from_u64(acc)
}
