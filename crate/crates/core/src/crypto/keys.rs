use ed25519_dalek::{Signer, SigningKey, VerifyingKey as DalekVerifyingKey};
use rand::RngCore;

hex_bytes!(
    /// Ed25519 verification key. Account addresses are derived from it.
    PublicKey,
    32
);

hex_bytes!(
    /// Ed25519 signature.
    Signature,
    64
);

hex_bytes!(
    /// 32-byte random nonce (the exchange secret `t`).
    Nonce32,
    32
);

hex_bytes!(
    /// 16-byte single-use challenge.
    Nonce16,
    16
);

impl Nonce32 {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self(b)
    }
}

impl Nonce16 {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Self(b)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(&secret) }
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl core::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public()).finish_non_exhaustive()
    }
}

impl PublicKey {
    /// Strict Ed25519 verification. Keys that do not decode to a curve point
    /// simply fail.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = DalekVerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify_strict(message, &sig).is_ok()
    }
}

/// Verification over raw byte slices; wrong lengths verify as `false`.
pub fn verify_signature(public_key: &[u8], signature: &[u8], message: &[u8]) -> bool {
    match (PublicKey::from_slice(public_key), Signature::from_slice(signature)) {
        (Some(pk), Some(sig)) => pk.verify(message, &sig),
        _ => false,
    }
}
