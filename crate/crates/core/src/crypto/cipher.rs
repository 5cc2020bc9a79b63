use alloc::vec::Vec;
use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;

use super::hash::{hash_parts, Digest};

const KDF_DOMAIN: &[u8] = b"podnet/enc-key";

/// Symmetric key for the update cipher.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SymKey([u8; 32]);

impl SymKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Key derivation from the exchange witness `r`.
    pub fn derive(r: &Digest) -> Self {
        Self(hash_parts(&[KDF_DOMAIN, r.as_bytes()]).0)
    }
}

impl core::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("SymKey(..)")
    }
}

// Every witness is fresh, so each derived key encrypts exactly one message and
// a fixed nonce is safe.
fn apply(data: &[u8], key: &SymKey) -> Vec<u8> {
    let mut out = data.to_vec();
    let mut cipher = ChaCha20::new(&key.0.into(), &[0u8; 12].into());
    cipher.apply_keystream(&mut out);
    out
}

/// Unauthenticated stream encryption; output length equals input length.
pub fn encrypt(plain: &[u8], key: &SymKey) -> Vec<u8> {
    apply(plain, key)
}

pub fn decrypt(ciphertext: &[u8], key: &SymKey) -> Vec<u8> {
    apply(ciphertext, key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_key(rng: &mut ChaCha8Rng) -> SymKey {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        SymKey::from_bytes(k)
    }

    #[test]
    fn inverse_over_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut m = alloc::vec![0u8; rng.gen_range(0..600)];
            rng.fill_bytes(&mut m);
            let k = random_key(&mut rng);
            let c = encrypt(&m, &k);
            assert_eq!(c.len(), m.len());
            assert_eq!(decrypt(&c, &k), m);
        }
    }

    #[test]
    fn one_mebibyte_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut m = alloc::vec![0u8; 1 << 20];
        rng.fill_bytes(&mut m);
        let k = SymKey::derive(&hash(b"r"));
        assert_eq!(decrypt(&encrypt(&m, &k), &k), m);
    }

    #[test]
    fn wrong_key_breaks_hash_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut update = alloc::vec![0u8; 256];
        rng.fill_bytes(&mut update);
        let update_id = hash(&update);
        let key = random_key(&mut rng);
        let c = encrypt(&update, &key);
        for _ in 0..1000 {
            let wrong = random_key(&mut rng);
            assert_ne!(hash(&decrypt(&c, &wrong)), update_id);
        }
    }

    #[test]
    fn empty_plaintext() {
        let k = SymKey::derive(&hash(b""));
        assert!(encrypt(&[], &k).is_empty());
    }

    #[test]
    fn derivation_is_domain_separated() {
        let r = hash(b"witness");
        assert_ne!(SymKey::derive(&r).0, hash(r.as_bytes()).0);
    }
}
