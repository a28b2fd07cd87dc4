//! Deterministic seeded random streams.
//!
//! Every stochastic component (episode, trial, training run) gets its own
//! ChaCha stream derived from a master seed and a stream index, so results are
//! reproducible regardless of how work is batched across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An independent random stream derived from `(master_seed, stream)`.
///
/// Streams with distinct indices never overlap; the same pair always yields
/// the same sequence.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
