//! Cryptographic primitives shared by every other module.
//!
//! One hash function (SHA-256) is used everywhere, signatures are Ed25519
//! (deterministic, 32-byte public keys) and update files are encrypted with a
//! ChaCha20 keystream keyed from the exchange witness. The proof-of-distribution
//! proof system sits behind [`ProofSystem`]; [`SimulatedProofSystem`] is the
//! only backend shipped.

mod cipher;
mod hash;
mod keys;
mod proof;

pub use cipher::{decrypt, encrypt, SymKey};
pub use hash::{hash, hash_parts, Digest};
pub use keys::{verify_signature, KeyPair, Nonce16, Nonce32, PublicKey, Signature};
pub use proof::{
    Instance, Proof, ProofKeys, ProofSystem, ProveError, ProvingKey, ProverAuditEntry,
    SimulatedProofSystem, Trapdoor, VerifyingKey, PROOF_LEN,
};
