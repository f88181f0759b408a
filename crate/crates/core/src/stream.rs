//! Deterministic derivation of named random substreams.
//!
//! Every random draw in this crate comes from a ChaCha12 stream whose seed is
//! derived from a master seed plus a tag path (replicate, machine, purpose).
//! Identical paths give identical streams on every platform and thread
//! schedule, which is what the common-random-number coupling across policies
//! relies on.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; full-period mixing of one 64-bit word.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a tag path into a master seed.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix(seed ^ 0x6c62_272e_07bb_0142);
    for &t in tags {
        state = splitmix(state ^ splitmix(t));
    }
    state
}

/// ChaCha12 stream at a derived seed.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(seed, tags))
}

/// Purpose tags, kept distinct so streams never alias across subsystems.
pub mod tag {
    pub const MACHINE: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const REPLICATE: u64 = 3;
    pub const SAMPLER: u64 = 4;
    pub const INSTANCE: u64 = 5;
}
