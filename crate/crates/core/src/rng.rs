//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from one master seed and a
//! path of integers (trial index, stream tag, round, sender, ...). The
//! derivation is a pure function, so any sub-stream can be rebuilt
//! without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags used by the experiment runner.
pub mod tag {
    pub const GRAPH: u64 = 1;
    pub const DATA: u64 = 2;
    pub const ATTACK: u64 = 3;
    pub const ORDER: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PLACEMENT: u64 = 6;
    pub const CERTIFY: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}
