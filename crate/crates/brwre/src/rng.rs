//! Seed derivation: one master seed, independent named sub-streams.
//!
//! Every stochastic task derives its generator as
//! `stream(master, &[STREAM_TAG, task_index, ...])`, so results are a pure
//! function of (master seed, task identity) and never of scheduling order or
//! worker count.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

pub const STREAM_ENV: u64 = 0x45;
pub const STREAM_BRANCH: u64 = 0xB1;
pub const STREAM_WALK: u64 = 0x57;
pub const STREAM_GAMMA_W: u64 = 0x6A;
pub const STREAM_GAMMA_B: u64 = 0x6B;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Chain a master seed through a list of tags.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &t in tags {
        s = splitmix64(s ^ t.wrapping_mul(0xD1B54A32D192ED03));
    }
    s
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tags))
}
