//! Deterministic random streams.
//!
//! All stochastic routines draw from ChaCha8 keyed by the user seed, with one
//! independent stream per regeneration cycle or excursion: stream `k` of seed
//! `s` is `ChaCha8Rng::seed_from_u64(s)` followed by `set_stream(k)`. Uniform
//! doubles take the top 53 bits of `next_u64`, so a fixed seed reproduces the
//! same trajectory on every platform regardless of how cycles are scheduled.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
