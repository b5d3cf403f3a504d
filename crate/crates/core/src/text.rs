//! Tokenizers and stable hashing shared across stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Lowercased maximal runs of alphanumeric characters.
///
/// Punctuation and whitespace both act as separators, so `"don't"` yields
/// `["don", "t"]`.
pub fn word_types(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase, delete punctuation, then split on whitespace.
///
/// Unlike [`word_types`], punctuation is removed rather than treated as a
/// separator, so `"don't"` yields `["dont"]`.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let stripped: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped.split_whitespace().map(str::to_lowercase).collect()
}

/// Count of whitespace-separated tokens.
pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}

/// SHA-256 over length-prefixed parts, so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Stable 64-bit hash of a seed and string parts.
pub fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let seed_bytes = seed.to_le_bytes();
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
    all.push(&seed_bytes);
    all.extend(parts.iter().map(|p| p.as_bytes()));
    let d = digest(&all);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Uniform draw in `[0, 1)` that depends only on the seed and parts.
pub fn unit_draw(seed: u64, parts: &[&str]) -> f64 {
    (stable_hash(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// A ChaCha generator keyed by the seed and parts.
pub fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, parts))
}

/// Hex content id, 16 bytes of SHA-256.
pub fn content_id(parts: &[&str]) -> String {
    let bytes: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    hex::encode(&digest(&bytes)[..16])
}
