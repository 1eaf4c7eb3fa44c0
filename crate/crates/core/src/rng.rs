//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(seed, domain)` and selected by a 64-bit stream index (usually the
//! replicate number). Any replicate can therefore be regenerated in
//! isolation, and serial and parallel runs see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the streams used by different procedures under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    WildWeights = 1,
    PairsDraws = 2,
    Rerandomization = 3,
    Simulation = 4,
    LevelTest = 5,
    Placebo = 6,
    StartPeriods = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for stream `index` of `(seed, domain)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ (domain as u64).rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives a child seed, used when one experiment replication needs a
/// whole seed of its own (e.g. for an inner bootstrap).
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix(splitmix(seed ^ ((domain as u64) << 48)) ^ index)
}
