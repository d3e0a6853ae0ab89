//! Deterministic seed derivation: every stage of the pipeline draws its RNG
//! seed from the single master seed hashed together with a stage name, so
//! reordering or parallelizing stages cannot change any result.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `(master, stage)`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Derive a per-index child seed, e.g. one per bootstrap replicate or clip.
pub fn derive_seed_indexed(master: u64, stage: &str, index: u64) -> u64 {
    derive_seed(master, &format!("{stage}#{index}"))
}

/// The RNG used throughout; seeded with a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
