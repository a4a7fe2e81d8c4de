//! Deterministic per-run seed derivation.

use rand::SeedableRng;

/// Random stream used by every simulation in the crate.
///
/// ChaCha8 output is specified independently of platform and crate version,
/// so a seed reproduces the same run everywhere.
pub type SimRng = rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` in an experiment seeded with `seed_base`.
///
/// Computes `mix64(seed_base + (run_index + 1) * 0x9E3779B97F4A7C15)` with
/// wrapping arithmetic. The multiplier is odd, so the pre-image is injective
/// in `run_index` for a fixed base, and `mix64` is a bijection; distinct runs
/// therefore never share a seed.
pub fn derive_run_seed(seed_base: u64, run_index: u64) -> u64 {
    mix64(seed_base.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Stream for run `run_index`.
pub fn run_rng(seed_base: u64, run_index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_run_seed(seed_base, run_index))
}
