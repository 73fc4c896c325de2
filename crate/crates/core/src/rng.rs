//! Counter-based random streams.
//!
//! A single 64-bit seed identifies an experiment. Each independent random
//! input of a simulation (driving noise, price noise, observation noise) reads
//! from its own ChaCha stream, and Monte-Carlo path `i` derives its seed from
//! the base seed with a SplitMix64 step. Results therefore never depend on
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids reserved for the different random inputs of one simulation.
pub mod streams {
    pub const FRACTIONAL_NOISE: u64 = 0;
    pub const BROWNIAN: u64 = 1;
    pub const PRICE: u64 = 2;
    pub const OBSERVATION: u64 = 3;
    pub const FIXTURE: u64 = 4;
}

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed of the `index`-th replication of an experiment seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
