//! Proof system for the proof-of-distribution statement
//! `exists r: H(r) = s and H(Dec(ciphertext, r)) = U_id`.
//!
//! [`SimulatedProofSystem`] stands in for a zk-SNARK. Setup draws an Ed25519
//! key; the verifying key is its public half and a proof is that key's
//! signature over the instance. The secret half never leaves the backend
//! except as the [`Trapdoor`] returned to whoever ran setup, and the backend
//! signs only after checking the statement against the prover's witness.
//! Verifiers therefore learn nothing about `r`, proving-key holders can only
//! prove true statements, and the setup party can forge, exactly like a
//! SNARK with a subverted setup.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::cipher::{decrypt, SymKey};
use super::hash::{hash, hash_parts, Digest};
use super::keys::{KeyPair, PublicKey, Signature};

/// Length of a simulated proof in bytes, independent of the update size.
pub const PROOF_LEN: usize = 64;

const TAG_DOMAIN: &[u8] = b"podnet/pod-proof/v1";

/// Public instance `x = (ciphertext, s)` plus the statement's `U_id`.
/// The ciphertext enters by digest so proofs stay constant-size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub ciphertext_digest: Digest,
    pub s: Digest,
    pub update_id: Digest,
}

impl Instance {
    pub fn new(ciphertext: &[u8], s: &Digest, update_id: &Digest) -> Self {
        Self { ciphertext_digest: hash(ciphertext), s: *s, update_id: *update_id }
    }
}

/// Opaque proving key (`pk_POD`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvingKey(#[serde(with = "crate::bytes::hex_vec")] pub Vec<u8>);

/// Opaque verifying key (`vk_POD`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyingKey(#[serde(with = "crate::bytes::hex_vec")] pub Vec<u8>);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofKeys {
    pub proving: ProvingKey,
    pub verifying: VerifyingKey,
    /// Binds the keys to the statement for one update (its `U_id`).
    pub statement_id: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    #[serde(with = "crate::bytes::hex_vec")]
    pub bytes: Vec<u8>,
    pub instance: Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProveError {
    #[error("witness does not hash to s")]
    WrongPreimage,
    #[error("ciphertext does not decrypt to the update under the witness")]
    WrongPlaintext,
    #[error("proving key is not known to this backend")]
    UnknownProvingKey,
    #[error("proving key was generated for a different statement")]
    StatementMismatch,
}

/// The (setup, prove, verify) contract of a zk-SNARK for the
/// proof-of-distribution statement.
pub trait ProofSystem {
    /// Setup secret that allows proving without a witness.
    type Trapdoor;

    fn setup<R: RngCore + ?Sized>(
        &mut self,
        statement_id: Digest,
        rng: &mut R,
    ) -> (ProofKeys, Self::Trapdoor);

    fn prove(
        &mut self,
        key: &ProvingKey,
        ciphertext: &[u8],
        s: &Digest,
        update_id: &Digest,
        witness: &Digest,
    ) -> Result<Proof, ProveError>;

    fn verify(
        &self,
        key: &VerifyingKey,
        ciphertext: &[u8],
        s: &Digest,
        update_id: &Digest,
        proof: &Proof,
    ) -> bool;
}

/// Setup secret of the simulated backend.
#[derive(Clone, Debug)]
pub struct Trapdoor {
    signer: KeyPair,
    statement_id: Digest,
}

impl Trapdoor {
    /// Produces a proof for any instance, true or not.
    pub fn forge(&self, ciphertext: &[u8], s: &Digest) -> Proof {
        let instance = Instance::new(ciphertext, s, &self.statement_id);
        issue(&self.signer, &self.statement_id, instance)
    }
}

/// Records what the prover oracle saw; test instrumentation only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProverAuditEntry {
    pub instance: Instance,
    pub witness: Digest,
}

#[derive(Default)]
pub struct SimulatedProofSystem {
    provers: BTreeMap<Vec<u8>, (KeyPair, Digest)>,
    audit: Option<Vec<ProverAuditEntry>>,
}

impl SimulatedProofSystem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Backend that remembers every witness it proved with.
    pub fn with_audit() -> Self {
        Self { provers: BTreeMap::new(), audit: Some(Vec::new()) }
    }

    pub fn audit_log(&self) -> &[ProverAuditEntry] {
        self.audit.as_deref().unwrap_or(&[])
    }
}

fn tag_message(statement_id: &Digest, instance: &Instance) -> [u8; 128 + TAG_DOMAIN.len()] {
    let mut msg = [0u8; 128 + TAG_DOMAIN.len()];
    let parts: [&[u8]; 5] = [
        TAG_DOMAIN,
        statement_id.as_bytes(),
        instance.ciphertext_digest.as_bytes(),
        instance.s.as_bytes(),
        instance.update_id.as_bytes(),
    ];
    let mut at = 0;
    for p in parts {
        msg[at..at + p.len()].copy_from_slice(p);
        at += p.len();
    }
    msg
}

fn issue(signer: &KeyPair, statement_id: &Digest, instance: Instance) -> Proof {
    let sig = signer.sign(&tag_message(statement_id, &instance));
    Proof { bytes: sig.0.to_vec(), instance }
}

fn encode_verifying_key(key: &PublicKey, statement_id: &Digest) -> VerifyingKey {
    let mut v = Vec::with_capacity(64);
    v.extend_from_slice(key.as_bytes());
    v.extend_from_slice(statement_id.as_bytes());
    VerifyingKey(v)
}

impl ProofSystem for SimulatedProofSystem {
    type Trapdoor = Trapdoor;

    fn setup<R: RngCore + ?Sized>(
        &mut self,
        statement_id: Digest,
        rng: &mut R,
    ) -> (ProofKeys, Trapdoor) {
        let signer = KeyPair::generate(rng);
        let mut handle = [0u8; 32];
        rng.fill_bytes(&mut handle);
        let handle = hash_parts(&[b"podnet/proving-key", &handle, statement_id.as_bytes()]);
        let keys = ProofKeys {
            proving: ProvingKey(handle.0.to_vec()),
            verifying: encode_verifying_key(&signer.public(), &statement_id),
            statement_id,
        };
        self.provers.insert(keys.proving.0.clone(), (signer.clone(), statement_id));
        (keys, Trapdoor { signer, statement_id })
    }

    fn prove(
        &mut self,
        key: &ProvingKey,
        ciphertext: &[u8],
        s: &Digest,
        update_id: &Digest,
        witness: &Digest,
    ) -> Result<Proof, ProveError> {
        let (signer, statement_id) =
            self.provers.get(&key.0).ok_or(ProveError::UnknownProvingKey)?;
        if statement_id != update_id {
            return Err(ProveError::StatementMismatch);
        }
        if hash(witness.as_bytes()) != *s {
            return Err(ProveError::WrongPreimage);
        }
        if hash(&decrypt(ciphertext, &SymKey::derive(witness))) != *update_id {
            return Err(ProveError::WrongPlaintext);
        }
        let instance = Instance::new(ciphertext, s, update_id);
        let proof = issue(signer, statement_id, instance);
        if let Some(log) = self.audit.as_mut() {
            log.push(ProverAuditEntry { instance, witness: *witness });
        }
        Ok(proof)
    }

    fn verify(
        &self,
        key: &VerifyingKey,
        ciphertext: &[u8],
        s: &Digest,
        update_id: &Digest,
        proof: &Proof,
    ) -> bool {
        if key.0.len() != 64 || proof.bytes.len() != PROOF_LEN {
            return false;
        }
        let (Some(vk), Some(statement_id)) =
            (PublicKey::from_slice(&key.0[..32]), Digest::from_slice(&key.0[32..]))
        else {
            return false;
        };
        if statement_id != *update_id {
            return false;
        }
        let instance = Instance::new(ciphertext, s, update_id);
        if proof.instance != instance {
            return false;
        }
        let Some(sig) = Signature::from_slice(&proof.bytes) else {
            return false;
        };
        vk.verify(&tag_message(&statement_id, &instance), &sig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt, Nonce32};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        update: Vec<u8>,
        update_id: Digest,
        r: Digest,
        s: Digest,
        ciphertext: Vec<u8>,
    }

    fn fixture(rng: &mut ChaCha8Rng, size: usize) -> Fixture {
        let mut update = alloc::vec![0u8; size];
        rng.fill_bytes(&mut update);
        let update_id = hash(&update);
        let t = Nonce32::random(rng);
        let r = hash_parts(&[b"distributor-pk....", t.as_bytes()]);
        let s = hash(r.as_bytes());
        let ciphertext = encrypt(&update, &SymKey::derive(&r));
        Fixture { update, update_id, r, s, ciphertext }
    }

    // Independent statement oracle.
    fn statement_holds(ciphertext: &[u8], s: &Digest, update_id: &Digest, r: &Digest) -> bool {
        hash(r.as_bytes()) == *s && hash(&decrypt(ciphertext, &SymKey::derive(r))) == *update_id
    }

    #[test]
    fn completeness_across_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut sys = SimulatedProofSystem::new();
        for size in [1usize, 1024, 1 << 20] {
            let f = fixture(&mut rng, size);
            let (keys, _) = sys.setup(f.update_id, &mut rng);
            let proof = sys.prove(&keys.proving, &f.ciphertext, &f.s, &f.update_id, &f.r).unwrap();
            assert_eq!(proof.bytes.len(), PROOF_LEN);
            assert!(sys.verify(&keys.verifying, &f.ciphertext, &f.s, &f.update_id, &proof));
        }
    }

    #[test]
    fn setup_is_probabilistic_and_binding() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut sys = SimulatedProofSystem::new();
        let f = fixture(&mut rng, 64);
        let (a, _) = sys.setup(f.update_id, &mut rng);
        let (b, _) = sys.setup(f.update_id, &mut rng);
        assert_ne!(a, b);
        let proof = sys.prove(&a.proving, &f.ciphertext, &f.s, &f.update_id, &f.r).unwrap();
        assert!(!sys.verify(&b.verifying, &f.ciphertext, &f.s, &f.update_id, &proof));
    }

    #[test]
    fn false_statements_are_not_provable() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut sys = SimulatedProofSystem::new();
        let f = fixture(&mut rng, 64);
        let (keys, _) = sys.setup(f.update_id, &mut rng);

        let other = hash(b"other witness");
        assert_eq!(
            sys.prove(&keys.proving, &f.ciphertext, &f.s, &f.update_id, &other),
            Err(ProveError::WrongPreimage)
        );

        let junk = encrypt(b"not the update", &SymKey::derive(&f.r));
        assert!(!statement_holds(&junk, &f.s, &f.update_id, &f.r));
        assert_eq!(
            sys.prove(&keys.proving, &junk, &f.s, &f.update_id, &f.r),
            Err(ProveError::WrongPlaintext)
        );
        assert_eq!(
            sys.prove(&ProvingKey(alloc::vec![0; 32]), &f.ciphertext, &f.s, &f.update_id, &f.r),
            Err(ProveError::UnknownProvingKey)
        );
    }

    #[test]
    fn instance_tampering_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut sys = SimulatedProofSystem::new();
        let f = fixture(&mut rng, 128);
        let (keys, _) = sys.setup(f.update_id, &mut rng);
        let proof = sys.prove(&keys.proving, &f.ciphertext, &f.s, &f.update_id, &f.r).unwrap();
        for i in 0..32 {
            let mut s2 = f.s;
            s2.0[i] ^= 0x40;
            assert!(!sys.verify(&keys.verifying, &f.ciphertext, &s2, &f.update_id, &proof));
        }
        let mut c2 = f.ciphertext.clone();
        c2[5] ^= 1;
        assert!(!sys.verify(&keys.verifying, &c2, &f.s, &f.update_id, &proof));

        let mut truncated = proof.clone();
        truncated.bytes.truncate(PROOF_LEN - 1);
        assert!(!sys.verify(&keys.verifying, &f.ciphertext, &f.s, &f.update_id, &truncated));
    }

    #[test]
    fn verified_proofs_have_valid_witnesses() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut sys = SimulatedProofSystem::with_audit();
        for _ in 0..20 {
            let f = fixture(&mut rng, 300);
            let (keys, _) = sys.setup(f.update_id, &mut rng);
            let proof = sys.prove(&keys.proving, &f.ciphertext, &f.s, &f.update_id, &f.r).unwrap();
            assert!(sys.verify(&keys.verifying, &f.ciphertext, &f.s, &f.update_id, &proof));
            let entry = sys
                .audit_log()
                .iter()
                .find(|e| e.instance == proof.instance)
                .expect("verified proof came from the prover");
            assert!(statement_holds(&f.ciphertext, &f.s, &f.update_id, &entry.witness));
        }
    }

    #[test]
    fn trapdoor_holder_can_forge() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut sys = SimulatedProofSystem::new();
        let f = fixture(&mut rng, 64);
        let (keys, trapdoor) = sys.setup(f.update_id, &mut rng);
        let junk = alloc::vec![0xAAu8; 64];
        let s = hash(b"anything");
        let forged = trapdoor.forge(&junk, &s);
        assert!(sys.verify(&keys.verifying, &junk, &s, &f.update_id, &forged));
        assert!(!statement_holds(&junk, &s, &f.update_id, &f.r));
        let _ = f.update;
    }

    #[test]
    fn proof_does_not_contain_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let mut sys = SimulatedProofSystem::new();
        let f = fixture(&mut rng, 64);
        let (keys, _) = sys.setup(f.update_id, &mut rng);
        let proof = sys.prove(&keys.proving, &f.ciphertext, &f.s, &f.update_id, &f.r).unwrap();
        assert!(!proof.bytes.windows(32).any(|w| w == f.r.as_bytes()));
    }
}
