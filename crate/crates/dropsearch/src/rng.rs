//! Seed derivation for reproducible sub-streams.
//!
//! Every random decision in the pipeline flows from an explicit 64-bit seed.
//! Independent purposes (training, search, OOD generation, per-sample
//! evaluation streams) get their own ChaCha stream derived from the base seed
//! plus two tag words, so evaluation order never changes results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams. Values are arbitrary but fixed forever.
pub mod tag {
    pub const INIT: u64 = 0x01;
    pub const TRAIN: u64 = 0x02;
    pub const SHUFFLE: u64 = 0x03;
    pub const SEARCH: u64 = 0x04;
    pub const OOD: u64 = 0x05;
    pub const BANK: u64 = 0x06;
    pub const EVAL: u64 = 0x07;
    pub const SPLIT: u64 = 0x08;
    pub const DATA: u64 = 0x09;
}

/// Builds a ChaCha stream keyed by (seed, a, b). The three words plus a fixed
/// domain constant fill the 256-bit key, so distinct tags can never collide.
pub fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&a.to_le_bytes());
    key[16..24].copy_from_slice(&b.to_le_bytes());
    key[24..32].copy_from_slice(&0x64726f70_73726368u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Deterministically mixes a base seed with two tag words into a new 64-bit
/// seed (splitmix64 finalizer). Used to derive per-slot bank seeds and other
/// scalar sub-seeds.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(b.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable 64-bit identity for a genome choice vector (FNV-1a over indices).
pub fn genome_id(choices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &c in choices {
        h ^= c as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
