//! Seeded random streams.
//!
//! Every random consumer in a pipeline draws from its own ChaCha stream keyed
//! by the master seed and a fixed stream id, so one master seed pins problem
//! generation, tuning, training and evaluation independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids for the pipeline stages.
pub mod stream {
    pub const TRAIN_SET: u64 = 1;
    pub const TEST_SET: u64 = 2;
    pub const TUNER: u64 = 3;
    pub const TRAINING: u64 = 4;
    pub const EVALUATION: u64 = 5;
}

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed; used where a whole sub-pipeline needs its own master seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
