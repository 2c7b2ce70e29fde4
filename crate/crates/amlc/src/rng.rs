//! Run-level randomness.
//!
//! Every run owns exactly one seeded generator. ChaCha8 is the fixed
//! algorithm: small state, counter-based, identical streams on every
//! platform. The identifier below is echoed into each run report so traces
//! stay comparable across builds.

use rand::{Rng, SeedableRng};

pub type RunRng = rand_chacha::ChaCha8Rng;

/// Written into every report's config echo.
pub const RNG_ALGO: &str = "chacha8";

pub fn rng_from_seed(seed: u64) -> RunRng {
    RunRng::seed_from_u64(seed)
}

/// The one draw primitive the learners use: a single uniform in `[0, 1)`
/// compared against `p`. Each call consumes exactly one draw, so a step's
/// draw count is auditable from its branch structure alone.
pub fn draw_bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Deterministic sub-seed derivation (splitmix64 finalizer) for fanning one
/// base seed out to cross-validation folds and sweep cells.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
