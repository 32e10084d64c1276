//! Canonical request fingerprints.
//!
//! The canonical form is the compact JSON serialization of the wire body
//! with object keys sorted (serde_json's default map is ordered), so the
//! fingerprint is invariant under key re-ordering and whitespace outside
//! message text.

use sha2::{Digest, Sha256};

use crate::gateway::types::ChatRequest;

pub fn canonical_json(value: &serde_json::Value) -> String {
    serde_json::to_string(value).expect("JSON value serializes")
}

pub fn fingerprint_value(value: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_json(value).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fingerprint(request: &ChatRequest) -> String {
    fingerprint_value(&request.wire_body())
}
