//! Deterministic RNG stream derivation.
//!
//! Every stochastic routine draws from a ChaCha8 stream derived from
//! (master seed, purpose, index). Trials and attempt chunks own disjoint
//! streams, so results are bit-identical regardless of how many workers
//! process them or in which order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Entanglement attempt chunks (diagonal-basis runs).
    Attempt = 1,
    /// Phase-scan and off-diagonal-basis attempt chunks.
    Scan = 2,
    /// Storage trials; the combined protocol reuses these indices so its
    /// memory qubit sees the same noise draws as a storage-only run.
    Storage = 3,
    /// Communication-qubit attempts inside the combined protocol.
    Combined = 4,
    /// Synthetic data generation (fits, oracles).
    Synthetic = 5,
}

/// Stream `index` must fit in 56 bits; the purpose tag occupies the top byte.
pub fn stream_rng(seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 56));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | index);
    rng
}
