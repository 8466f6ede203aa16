//! Counter-based substreams: every realization and every layer inside it owns
//! a ChaCha stream derived from one master seed, so any piece of an ensemble
//! can be regenerated in isolation and independently of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Slots per realization; layer `n` uses slot `n`, the `Y` factor uses [`Y_SLOT`].
pub const SLOTS_PER_REALIZATION: u64 = 1 << 16;
pub const Y_SLOT: u64 = SLOTS_PER_REALIZATION - 1;

pub fn substream(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream for `slot` of realization `index`.
pub fn realization_stream(master_seed: u64, index: u64, slot: u64) -> StreamRng {
    debug_assert!(slot < SLOTS_PER_REALIZATION);
    substream(master_seed, index * SLOTS_PER_REALIZATION + slot)
}

/// Derives an unrelated master seed for an auxiliary ensemble (e.g. the
/// second side of a two-sample test).
pub fn derive_seed(master_seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
