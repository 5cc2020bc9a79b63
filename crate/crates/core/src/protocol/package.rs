use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{hash, Digest, KeyPair, ProofKeys, ProvingKey, PublicKey, Signature, VerifyingKey};
use crate::dsn::Blob;

/// The vendor's wrapping package `P = (U, pk_POD, vk_POD, sig_vendor(U_id || vk_POD))`.
///
/// `p_id` is the hash of the canonical encoding, which is also what travels
/// over the DSN.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdatePackage {
    pub update: Blob,
    pub proving_key: ProvingKey,
    pub verifying_key: VerifyingKey,
    pub vendor_sig: Signature,
    pub u_id: Digest,
    pub p_id: Digest,
}

impl UpdatePackage {
    pub fn vendor_message(u_id: &Digest, verifying_key: &VerifyingKey) -> Vec<u8> {
        let mut m = Vec::with_capacity(32 + verifying_key.0.len());
        m.extend_from_slice(u_id.as_bytes());
        m.extend_from_slice(&verifying_key.0);
        m
    }

    pub fn build(vendor: &KeyPair, update: Blob, keys: &ProofKeys) -> Self {
        let u_id = hash(&update);
        let vendor_sig = vendor.sign(&Self::vendor_message(&u_id, &keys.verifying));
        Self::assemble(update, keys.proving.clone(), keys.verifying.clone(), vendor_sig)
    }

    fn assemble(update: Blob, proving_key: ProvingKey, verifying_key: VerifyingKey, vendor_sig: Signature) -> Self {
        let u_id = hash(&update);
        let mut pkg = Self { update, proving_key, verifying_key, vendor_sig, u_id, p_id: Digest::default() };
        pkg.p_id = hash(&pkg.encode());
        pkg
    }

    pub fn encode(&self) -> Vec<u8> {
        Encoder::new()
            .bytes(&self.update)
            .bytes(&self.proving_key.0)
            .bytes(&self.verifying_key.0)
            .bytes(self.vendor_sig.as_bytes())
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let update: Blob = Arc::from(dec.bytes()?);
        let proving_key = ProvingKey(dec.bytes()?.to_vec());
        let verifying_key = VerifyingKey(dec.bytes()?.to_vec());
        let vendor_sig = Signature(dec.fixed()?);
        dec.finish()?;
        Ok(Self::assemble(update, proving_key, verifying_key, vendor_sig))
    }

    pub fn verify_vendor(&self, vendor: &PublicKey) -> bool {
        vendor.verify(&Self::vendor_message(&self.u_id, &self.verifying_key), &self.vendor_sig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{ProofSystem, SimulatedProofSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ids_and_signature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vendor = KeyPair::generate(&mut rng);
        let update: Blob = Arc::from(&b"firmware v2"[..]);
        let (keys, _) = SimulatedProofSystem::new().setup(hash(&update), &mut rng);
        let pkg = UpdatePackage::build(&vendor, update, &keys);
        assert_eq!(pkg.u_id, hash(b"firmware v2"));
        let bytes = pkg.encode();
        assert_eq!(pkg.p_id, hash(&bytes));
        assert!(pkg.verify_vendor(&vendor.public()));
        assert!(!pkg.verify_vendor(&KeyPair::generate(&mut rng).public()));
        assert_eq!(UpdatePackage::decode(&bytes).unwrap(), pkg);
    }
}
