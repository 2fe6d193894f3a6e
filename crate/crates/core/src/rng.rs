//! Counter-based random streams.
//!
//! Every draw in the crate comes from a ChaCha8 stream keyed by a master seed and
//! selected by an integer index, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a sequence of tags into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Random stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod tag {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const KERNEL1: u64 = 0x4b45_5231;
    pub const KERNEL2: u64 = 0x4b45_5232;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const PROBE: u64 = 0x5052_4f42;
}
