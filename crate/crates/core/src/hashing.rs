//! Stable content hashing and seeded coin flips.
//!
//! Everything here must stay deterministic across runs, platforms, and
//! library versions: rubric ids, embedding-cache keys, and presentation-order
//! flips all feed byte-identical artifacts.

use sha2::{Digest, Sha256};

/// Stable content hash of a rubric text: first 16 hex chars of SHA-256.
pub fn content_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex_prefix(&digest, 16)
}

/// Full-length hex digest, used for embedding-cache keys.
pub fn content_hash_full(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex_prefix(&digest, 64)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("writing to String cannot fail");
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// Deterministic coin flip derived from a seed and an ordered list of
/// byte-string parts.
pub fn seeded_coin(seed: u64, parts: &[&[u8]]) -> bool {
    seeded_u64(seed, parts) & 1 == 1
}

/// Deterministic 64-bit value from a seed and parts, for seeding mock RNGs.
pub fn seeded_u64(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest longer than 8 bytes"))
}
