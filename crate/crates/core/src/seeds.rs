//! Seeded, stream-indexed randomness.
//!
//! Every stochastic routine takes (seed, stream) so that replication r of a
//! simulation draws from stream (seed, r) regardless of execution order;
//! parallel schedules therefore reproduce the sequential results bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based stream: same (seed, stream) always yields the same generator.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
