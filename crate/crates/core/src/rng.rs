//! Seeded randomness. Every stochastic routine in the crate takes an
//! explicit 64-bit seed and draws from a ChaCha8 stream through these
//! helpers, so outputs are reproducible byte for byte.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{fl, Scalar};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a substream index (restarts, subjects).
pub fn substream(seed: u64, index: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform in [0, 1).
pub fn uniform<F: Scalar>(rng: &mut SeededRng) -> F {
    fl(rng.random::<f64>())
}

/// Uniform in [lo, hi).
pub fn uniform_in<F: Scalar>(rng: &mut SeededRng, lo: F, hi: F) -> F {
    lo + (hi - lo) * uniform::<F>(rng)
}

/// Uniform integer in [0, n).
pub fn below(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Standard normal via Box-Muller.
pub fn normal<F: Scalar>(rng: &mut SeededRng) -> F {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    fl((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
}
