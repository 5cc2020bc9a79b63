use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, Nonce16, Nonce32, Proof, PublicKey, Signature};
use crate::dsn::{Blob, NodeId};
use crate::ledger::Address;

/// Identifies one exchange; chosen by the device when it opens the session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionId {
    pub device: NodeId,
    pub seq: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Distributor,
    Device,
}

/// Exchange progress, named after the last protocol step completed. Both
/// roles walk the same sequence; the device never observes `Authenticated`
/// and passes straight from `Challenged` to `OfferSent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    Init,
    Challenged,
    Authenticated,
    OfferSent,
    SignatureReceived,
    Aborted(AbortReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    #[error("device signature on the challenge does not verify")]
    BadDeviceSig,
    #[error("device is not listed in the bid")]
    NonMemberDevice,
    #[error("vendor signature on the proof keys does not verify")]
    BadVendorSig,
    #[error("proof of correct encryption does not verify")]
    BadProof,
    #[error("peer disconnected")]
    PeerDisconnect,
    #[error("prover refused the statement")]
    ProvingFailed,
    #[error("message arrived out of order")]
    OutOfOrder,
    #[error("no package for this contract")]
    UnknownContract,
    #[error("device already signed a receipt for this contract")]
    AlreadySigned,
    #[error("delivery receipt does not verify")]
    BadReceipt,
}

#[derive(Clone, Debug)]
pub struct ExchangeSession {
    pub id: SessionId,
    pub role: Role,
    pub contract: Address,
    pub distributor: NodeId,
    pub device: NodeId,
    pub state: SessionState,
    pub opened_at: u64,
    pub challenge: Option<Nonce16>,
    pub device_key: Option<PublicKey>,
    /// Distributor only; never leaves the distributor before the redeem.
    pub t: Option<Nonce32>,
    /// Distributor only; never leaves the distributor before the redeem.
    pub r: Option<Digest>,
    pub s: Option<Digest>,
    pub ciphertext: Option<Blob>,
    pub proof: Option<Proof>,
    pub device_sig: Option<Signature>,
}

impl ExchangeSession {
    pub fn new(id: SessionId, role: Role, contract: Address, distributor: NodeId, now: u64) -> Self {
        Self {
            id,
            role,
            contract,
            distributor,
            device: id.device,
            state: SessionState::Init,
            opened_at: now,
            challenge: None,
            device_key: None,
            t: None,
            r: None,
            s: None,
            ciphertext: None,
            proof: None,
            device_sig: None,
        }
    }

    /// Moves to `next` if the step order allows it.
    pub fn advance(&mut self, next: SessionState) -> Result<(), AbortReason> {
        use SessionState::*;
        let ok = matches!(
            (self.role, self.state, next),
            (_, Init, Challenged)
                | (Role::Distributor, Challenged, Authenticated)
                | (Role::Distributor, Authenticated, OfferSent)
                | (Role::Device, Challenged, OfferSent)
                | (_, OfferSent, SignatureReceived)
        ) || (matches!(next, Aborted(_)) && !self.is_finished());
        if ok {
            self.state = next;
            Ok(())
        } else {
            Err(AbortReason::OutOfOrder)
        }
    }

    pub fn abort(&mut self, reason: AbortReason) -> AbortReason {
        if !self.is_finished() {
            self.state = SessionState::Aborted(reason);
        }
        reason
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SessionState::SignatureReceived | SessionState::Aborted(_))
    }
}
