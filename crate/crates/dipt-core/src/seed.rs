//! Seed derivation.
//!
//! Every random choice in the harness flows from one root seed. Subsystem
//! seeds are derived by hashing the root together with a string scope, so
//! results stay stable across platforms and releases (unlike `DefaultHasher`).

use sha2::{Digest, Sha256};

/// Derive a child seed from `root` and a scope label.
pub fn derive_seed(root: u64, scope: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(scope.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Derive a child seed scoped by a label and an index.
pub fn derive_seed_indexed(root: u64, scope: &str, index: u64) -> u64 {
    derive_seed(root, &format!("{scope}/{index}"))
}
