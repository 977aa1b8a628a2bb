//! Seeded, counter-addressable random streams.
//!
//! Every random draw in the crate comes from `stream(seed, id)`: a ChaCha8
//! generator keyed by the seed and positioned on stream `id`. Results depend
//! only on `(seed, id)`, never on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in every report header.
pub const PRNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.9 seed_from_u64+set_stream";

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
