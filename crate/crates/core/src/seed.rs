//! Seed derivation for independent work units.
//!
//! Unit `index` under master seed `s` uses `derive_seed(s, index)`: the
//! SplitMix64 finalizer applied to `s + (index + 1) * 0x9E3779B97F4A7C15`
//! (wrapping). The rule depends only on the pair, so any scheduling of the
//! units reproduces the sequential result.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}
