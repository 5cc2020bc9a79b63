use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::session::SessionId;
use crate::codec::Encoder;
use crate::crypto::{hash, Digest, Nonce16, Proof, PublicKey, Signature, VerifyingKey};
use crate::dsn::{Blob, NodeId};
use crate::ledger::Address;

const CHALLENGE_DOMAIN: &[u8] = b"podnet/challenge";

/// What a device signs to answer challenge `c`.
pub fn challenge_message(c: &Nonce16) -> [u8; 32] {
    let mut m = [0u8; 32];
    m[..16].copy_from_slice(CHALLENGE_DOMAIN);
    m[16..].copy_from_slice(c.as_bytes());
    m
}

/// Step-4 payload: the encrypted update, `s`, the proof and the vendor-signed
/// verifying key. Contains neither `r` nor `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Offer {
    pub ciphertext: Blob,
    pub s: Digest,
    pub proof: Proof,
    pub verifying_key: VerifyingKey,
    pub vendor_sig: Signature,
}

/// Point-to-point protocol messages between devices and distributors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    /// Device asks for the preimage of `update_id`.
    UpdateRequest { session: SessionId, contract: Address, update_id: Digest },
    Challenge { session: SessionId, c: Nonce16 },
    ChallengeResponse { session: SessionId, device: PublicKey, sig: Signature },
    Offer { session: SessionId, offer: Offer },
    /// The proof-of-distribution signature over `U_id || s`.
    DeliveryReceipt { session: SessionId, sig: Signature },
    /// Unsolicited pointer to a contract. Honest nodes learn contracts from
    /// the factory; only adversaries send this.
    Announce { contract: Address },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::UpdateRequest { .. } => "update-request",
            Message::Challenge { .. } => "challenge",
            Message::ChallengeResponse { .. } => "challenge-response",
            Message::Offer { .. } => "offer",
            Message::DeliveryReceipt { .. } => "delivery-receipt",
            Message::Announce { .. } => "announce",
        }
    }

    pub fn session(&self) -> Option<SessionId> {
        match self {
            Message::UpdateRequest { session, .. }
            | Message::Challenge { session, .. }
            | Message::ChallengeResponse { session, .. }
            | Message::Offer { session, .. }
            | Message::DeliveryReceipt { session, .. } => Some(*session),
            Message::Announce { .. } => None,
        }
    }

    /// Canonical wire encoding; the transcript records its hash.
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.bytes(self.kind().as_bytes());
        if let Some(s) = self.session() {
            e.u64(u64::from(s.device.0)).u64(u64::from(s.seq));
        }
        match self {
            Message::UpdateRequest { contract, update_id, .. } => {
                e.bytes(contract.as_bytes()).bytes(update_id.as_bytes());
            }
            Message::Challenge { c, .. } => {
                e.bytes(c.as_bytes());
            }
            Message::ChallengeResponse { device, sig, .. } => {
                e.bytes(device.as_bytes()).bytes(sig.as_bytes());
            }
            Message::Offer { offer, .. } => {
                e.bytes(&offer.ciphertext)
                    .bytes(offer.s.as_bytes())
                    .bytes(&offer.proof.bytes)
                    .bytes(offer.proof.instance.ciphertext_digest.as_bytes())
                    .bytes(offer.proof.instance.s.as_bytes())
                    .bytes(offer.proof.instance.update_id.as_bytes())
                    .bytes(&offer.verifying_key.0)
                    .bytes(offer.vendor_sig.as_bytes());
            }
            Message::DeliveryReceipt { sig, .. } => {
                e.bytes(sig.as_bytes());
            }
            Message::Announce { contract } => {
                e.bytes(contract.as_bytes());
            }
        }
        e.finish()
    }
}

/// One line of the run transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: alloc::string::String,
    pub payload_hash: Digest,
    pub len: u64,
}

impl TranscriptEntry {
    pub fn record(tick: u64, from: NodeId, to: NodeId, kind: &str, payload: &[u8]) -> Self {
        Self {
            tick,
            from,
            to,
            kind: kind.into(),
            payload_hash: hash(payload),
            len: payload.len() as u64,
        }
    }
}
