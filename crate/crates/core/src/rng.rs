//! Named random sub-streams derived from one master seed.
//!
//! Every stochastic component draws from its own stream so that it can be
//! reproduced in isolation. A stream is identified by a name and an index
//! (typically the epoch) and seeded with
//! `splitmix64(master ^ fnv1a(name) ^ splitmix64(index))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const FORGE: &str = "forge";
pub const SHUFFLE: &str = "shuffle";
pub const AUGMENT: &str = "augment";
pub const INIT: &str = "init";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of the sub-stream `(name, index)` under `master`.
pub fn substream_seed(master: u64, name: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(name) ^ splitmix64(index))
}

pub fn substream(master: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(master, name, index))
}
