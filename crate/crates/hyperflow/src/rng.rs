//! Deterministic RNG stream derivation.
//!
//! All randomness in the crate flows from one root seed. Each stage derives a
//! named stream so stages stay independently reproducible, and parallel tasks
//! derive indexed sub-streams so results do not depend on worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Derive the RNG stream for a named stage.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    stream_indexed(seed, label, 0)
}

/// Derive the `index`-th sub-stream of a named stage.
///
/// Used for per-task streams (e.g. one per random walk) so parallel execution
/// order cannot change the result.
pub fn stream_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(label.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&0x68797065_72666c6fu64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
