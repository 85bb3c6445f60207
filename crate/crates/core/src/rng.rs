//! Seeded random streams.
//!
//! Every stochastic routine draws from ChaCha8 (the counter-based stream
//! cipher generator of `rand_chacha`). A `(seed, stream)` pair fixes the
//! sequence, so work split across threads is reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
