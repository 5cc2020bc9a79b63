use sha2::{Digest as _, Sha256};

hex_bytes!(
    /// Output of the fixed 256-bit hash `H` (SHA-256).
    Digest,
    32
);

#[allow(clippy::derivable_impls)]
impl Default for Digest {
    fn default() -> Self {
        Self([0; 32])
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// `H(a || b || ...)` without materializing the concatenation.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}
