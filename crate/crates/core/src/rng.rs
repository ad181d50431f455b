//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, stream)`. Parallel work is cut into fixed-size blocks and block `b`
//! always uses stream `b`, so results are the same for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Items per random stream in block-parallel loops.
pub const BLOCK: usize = 4096;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent sub-seed, used when one operation needs several
/// unrelated stream families.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
