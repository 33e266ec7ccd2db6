//! Keyed random streams.
//!
//! Every stochastic draw in the engine comes from a stream derived from the
//! run seed plus a tuple of integer keys (purpose, stage, image index,
//! attempt, ...). Streams never depend on execution order, so parallel
//! evaluation and checkpoint resume reproduce straight-through runs exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags mixed into stream keys.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const LABEL: u64 = 4;
    pub const TEST: u64 = 5;
    pub const ABLATE: u64 = 6;
    pub const PROBE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, keys))
}
