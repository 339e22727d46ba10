//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a seed derived
//! from a master seed and a path of integer labels, so results never depend on
//! thread scheduling or on the order in which independent streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a stream label.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derives a seed along a path of labels.
pub fn derive_path(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(seed, |s, &l| derive(s, l))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used across modules. Kept in one place so two subsystems
/// never share a stream by accident.
pub mod label {
    pub const MEDIAN_HEURISTIC: u64 = 1;
    pub const RESAMPLE: u64 = 2;
    pub const HONESTY: u64 = 3;
    pub const TREE: u64 = 4;
    pub const REDRAW: u64 = 5;
    pub const POPULATION: u64 = 6;
    pub const SURVEY: u64 = 7;
    pub const FOREST: u64 = 8;
    pub const EVALUATION: u64 = 9;
    pub const AVERAGE: u64 = 10;
    pub const PSEUDO: u64 = 11;
    pub const REAPPLY: u64 = 12;
}
