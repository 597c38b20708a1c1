//! Deterministic seed derivation.
//!
//! Every source of randomness in this crate is a ChaCha8 stream whose seed is
//! derived from a single master seed through the scheme below, so a run is
//! fully determined by one 64-bit number.
//!
//! The derivation is `mix(master ^ mix(tag ^ mix(index)))` where `mix` is the
//! SplitMix64 finalizer. `tag` identifies the consumer (generator, LSH,
//! AFN, ...) and `index` distinguishes parallel streams of the same consumer
//! (e.g. LSH repetitions), so streams never alias across consumers or
//! repetitions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each independent consumer of randomness gets its own tag.
pub mod tag {
    pub const GENERATE: u64 = 0x01;
    pub const SCALE_SAMPLE: u64 = 0x02;
    pub const LSH: u64 = 0x03;
    pub const AFN: u64 = 0x04;
    pub const JL: u64 = 0x05;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, tag, index)`.
#[inline]
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix(master ^ mix(tag ^ mix(index)))
}

/// A ChaCha8 stream for the given `(master, tag, index)` triple.
pub fn stream(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
