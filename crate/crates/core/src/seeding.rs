//! Deterministic RNG streams derived from a run seed.
//!
//! Every consumer of randomness owns a ChaCha stream selected by a purpose
//! tag, so results never depend on thread scheduling or on which other
//! consumers ran first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SPLIT: u64 = 1;
pub const SAMPLE: u64 = 2;
pub const INIT: u64 = 3;
pub const SHUFFLE: u64 = 4;
pub const DROPOUT: u64 = 5;
pub const NOISE_TRAIN: u64 = 6;
pub const NOISE_TEST: u64 = 7;
pub const SYNTH: u64 = 8;
pub const EXTRACTOR_INIT: u64 = 9;
pub const GRAD_CHECK: u64 = 10;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `purpose` stream of `seed`.
pub fn stream(seed: u64, purpose: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// An independent stream for item `index` of a `purpose` (per image, per class).
pub fn substream(seed: u64, purpose: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)));
    rng.set_stream(purpose);
    rng
}
