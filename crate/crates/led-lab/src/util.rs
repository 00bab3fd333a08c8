//! Seed derivation shared by all stochastic stages.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Independent RNG stream derived from a root seed and a stage tag.
///
/// Hashing the tag keeps the streams decoupled: adding draws in one
/// stage never perturbs another.
pub fn rng_for(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}

/// Hex SHA-256 of a byte slice, for manifests and reproducibility checks.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
