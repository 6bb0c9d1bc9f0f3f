//! Deterministic seed derivation.
//!
//! Every random draw of a trial comes from its own generator keyed by
//! `(base_seed, snr_index, stream, trial_index)`, so any single trial can be replayed in
//! isolation and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Gains = 1,
    Doppler = 2,
    Delay = 3,
    Noise = 4,
    Data = 5,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of SNR point `snr_index`.
pub fn point_seed(base_seed: u64, snr_index: usize) -> u64 {
    mix64(mix64(base_seed) ^ (snr_index as u64).wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Seed of one stream of one trial.
pub fn trial_seed(point_seed: u64, stream: Stream, trial: u64) -> u64 {
    mix64(mix64(point_seed ^ (stream as u64).wrapping_mul(0x8cb9_2ba7_2f3d_8dd7)) ^ trial)
}

pub fn trial_rng(point_seed: u64, stream: Stream, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(point_seed, stream, trial))
}
