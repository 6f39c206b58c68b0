//! Seeded uniform sampling shared by verification and simulation.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[0, 1)` with 53 random bits.
pub(crate) fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

pub(crate) fn in_box(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim).map(|_| uniform(rng, -half_width, half_width)).collect()
}

/// Rejection sampling from `[-half_width, half_width]^dim`; `None` after
/// `max_proposals` misses.
pub(crate) fn rejection(
    rng: &mut ChaCha8Rng,
    dim: usize,
    half_width: f64,
    max_proposals: usize,
    mut accept: impl FnMut(&[f64]) -> bool,
) -> Option<Vec<f64>> {
    for _ in 0..max_proposals {
        let x = in_box(rng, dim, half_width);
        if accept(&x) {
            return Some(x);
        }
    }
    None
}
