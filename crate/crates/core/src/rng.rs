//! Counter-based deterministic randomness. Values are keyed by (seed, index)
//! rather than drawn from mutable generator state, so any evaluation order,
//! thread count, or partial evaluation produces identical numbers.

/// SplitMix64 finalizer: bijective avalanche mix of one word.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// The n-th word of the stream keyed by `seed`.
pub(crate) fn splitmix(seed: u64, n: u64) -> u64 {
    mix64(seed.wrapping_add(n.wrapping_add(1).wrapping_mul(0x9e3779b97f4a7c15)))
}

/// Uniform in [-0.5, 0.5) from one hashed word.
pub(crate) fn centered_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}
