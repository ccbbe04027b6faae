//! Seed derivation.
//!
//! Every random decision in a run (parameter init, dropout masks, shuffling,
//! dataset splits, synthetic graphs) draws from its own ChaCha stream keyed by
//! `(master seed, purpose, index)`. Streams are independent of one another, so
//! adding a consumer never perturbs another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Combines two indices into one stream index (e.g. epoch and batch).
pub fn pair(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b
}
