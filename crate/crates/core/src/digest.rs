//! SHA-256 helpers for cache keys and fingerprints.

use sha2::{Digest, Sha256};

/// Hex SHA-256 over length-prefixed fields, so `("ab", "c")` and `("a", "bc")`
/// never collide.
pub fn fields_digest<'a, I>(fields: I) -> String
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut hasher = Sha256::new();
    for field in fields {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field);
    }
    hex::encode(hasher.finalize())
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
