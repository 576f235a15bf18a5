//! Deterministic RNG streams.
//!
//! Every stochastic stage derives its generator from `(seed, stream)` so that
//! runs are reproducible and independent work items (episodes, grid points)
//! never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers keep the stages of one pipeline seed apart.
pub mod stream {
    pub const CORPUS: u64 = 1;
    pub const RM_INIT: u64 = 2;
    pub const RM_BATCH: u64 = 3;
    pub const VALID_SET: u64 = 4;
    pub const POLICY_INIT: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const ROLLOUT: u64 = 7;
    pub const MINIBATCH: u64 = 8;
    pub const EVAL: u64 = 9;
    pub const LEMMA: u64 = 10;
    pub const PARITY: u64 = 11;
}

/// Generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Generator for a sub-item (episode, step) of a stream.
pub fn sub_rng(seed: u64, stream: u64, item: u64) -> Rng {
    rng(mix(seed, item), stream)
}

/// Child seed for a sub-item, for APIs that take a plain seed.
pub fn derive(seed: u64, item: u64) -> u64 {
    mix(seed, item)
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
