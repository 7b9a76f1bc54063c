//! Reproducible random streams keyed by (seed, replicate).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one replicate. Different replicates get independent ChaCha
/// streams, so the draw order inside a replicate never depends on scheduling.
pub fn stream(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Sub-stream for an auxiliary purpose within a replicate (e.g. bootstrap).
pub fn substream(seed: u64, replicate: u64, purpose: u64) -> ChaCha8Rng {
    let mixed = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    stream(mixed, replicate)
}
