use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::messages::{challenge_message, Message, Offer};
use super::package::UpdatePackage;
use super::session::{AbortReason, ExchangeSession, Role, SessionId, SessionState};
use crate::contract::delivery_message;
use crate::crypto::{decrypt, hash, Digest, KeyPair, Nonce16, ProofSystem, PublicKey, Signature, SymKey};
use crate::dsn::{Blob, ContentId, Dsn, NodeId};
use crate::ledger::{Address, Ledger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("no such contract")]
    UnknownContract,
    #[error("contract owner is not this device's vendor")]
    WrongVendor,
    #[error("contract at height {offered} is not newer than installed height {installed}")]
    Downgrade { offered: u64, installed: u64 },
    #[error("device is not listed in the bid")]
    NotListed,
    #[error("bid has expired")]
    Expired,
    #[error("already signed a receipt for this contract")]
    AlreadySigned,
    #[error("no provider advertises the update")]
    NoProviders,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CompleteError {
    #[error("event is for another device")]
    NotForMe,
    #[error("no signed exchange is waiting on this contract")]
    NoPending,
    #[error("revealed key does not hash to the committed s")]
    BindingMismatch,
    #[error("decrypted update does not hash to the update id")]
    IntegrityFailure,
    #[error("update is not newer than the installed one")]
    Downgrade,
}

/// An exchange the device has signed for and is waiting to decrypt.
#[derive(Clone, Debug)]
pub struct PendingUpdate {
    pub contract: Address,
    pub session: SessionId,
    pub distributor: NodeId,
    pub update_id: Digest,
    pub height: u64,
    pub s: Digest,
    pub ciphertext: Blob,
    pub receipt: Signature,
    pub completed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Installed {
    pub contract: Address,
    pub update_id: Digest,
    pub height: u64,
    pub distributor: NodeId,
    pub tick: u64,
}

#[derive(Debug)]
pub struct Device {
    pub node: NodeId,
    keys: KeyPair,
    vendor: PublicKey,
    version: u64,
    installed: Option<Installed>,
    firmware: Option<Blob>,
    signed: BTreeMap<Address, PendingUpdate>,
    sessions: BTreeMap<SessionId, ExchangeSession>,
    seq: u32,
}

impl Device {
    pub fn new(node: NodeId, keys: KeyPair, vendor: PublicKey) -> Self {
        Self {
            node,
            keys,
            vendor,
            version: 0,
            installed: None,
            firmware: None,
            signed: BTreeMap::new(),
            sessions: BTreeMap::new(),
            seq: 0,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn vendor(&self) -> PublicKey {
        self.vendor
    }

    /// Deployment height of the installed update; 0 for factory firmware.
    pub fn installed_version(&self) -> u64 {
        self.version
    }

    pub fn installed(&self) -> Option<&Installed> {
        self.installed.as_ref()
    }

    pub fn firmware(&self) -> Option<&Blob> {
        self.firmware.as_ref()
    }

    pub fn pending(&self) -> &BTreeMap<Address, PendingUpdate> {
        &self.signed
    }

    pub fn sessions(&self) -> &BTreeMap<SessionId, ExchangeSession> {
        &self.sessions
    }

    /// Checks whether this device would request an update under `contract`.
    pub fn eligible(&self, contract: &Address, ledger: &Ledger, now: u64) -> Result<Digest, RequestError> {
        let bid = ledger.contract(contract).ok_or(RequestError::UnknownContract)?;
        if bid.owner().as_public_key() != self.vendor {
            return Err(RequestError::WrongVendor);
        }
        if bid.deployed_height() <= self.version {
            return Err(RequestError::Downgrade { offered: bid.deployed_height(), installed: self.version });
        }
        if now >= bid.expiration() {
            return Err(RequestError::Expired);
        }
        if self.signed.contains_key(contract) {
            return Err(RequestError::AlreadySigned);
        }
        if !bid.is_member(&self.keys.public()) {
            return Err(RequestError::NotListed);
        }
        Ok(*bid.update_hash())
    }

    /// The newest eligible contract among `known`.
    pub fn choose_contract<'a, I>(&self, known: I, ledger: &Ledger, now: u64) -> Option<Address>
    where
        I: IntoIterator<Item = &'a Address>,
    {
        known
            .into_iter()
            .filter(|c| self.eligible(c, ledger, now).is_ok())
            .max_by_key(|c| ledger.contract(c).map(|b| b.deployed_height()))
            .copied()
    }

    /// Eligible contract's update id and the nodes advertising it.
    pub fn providers(
        &self,
        contract: &Address,
        ledger: &Ledger,
        dsn: &Dsn,
        now: u64,
    ) -> Result<(Digest, Vec<NodeId>), RequestError> {
        let u_id = self.eligible(contract, ledger, now)?;
        let nodes = dsn.lookup(&ContentId(u_id));
        if nodes.is_empty() {
            return Err(RequestError::NoProviders);
        }
        Ok((u_id, nodes))
    }

    /// Step 1: opens a session with `provider`.
    pub fn open_session(&mut self, contract: Address, update_id: Digest, provider: NodeId, now: u64) -> Message {
        let session = SessionId { device: self.node, seq: self.seq };
        self.seq += 1;
        self.sessions.insert(session, ExchangeSession::new(session, Role::Device, contract, provider, now));
        Message::UpdateRequest { session, contract, update_id }
    }

    /// Step 3: signs the challenge.
    pub fn on_challenge(&mut self, session: SessionId, c: &Nonce16) -> Result<Message, AbortReason> {
        let s = self.sessions.get_mut(&session).ok_or(AbortReason::OutOfOrder)?;
        s.advance(SessionState::Challenged)?;
        s.challenge = Some(*c);
        let sig = self.keys.sign(&challenge_message(c));
        Ok(Message::ChallengeResponse { session, device: self.keys.public(), sig })
    }

    /// Step 4 to 5: verifies the offer and signs the proof-of-distribution.
    pub fn on_offer<P: ProofSystem>(
        &mut self,
        session: SessionId,
        offer: &Offer,
        ledger: &Ledger,
        proofs: &P,
    ) -> Result<Message, AbortReason> {
        let s = self.sessions.get_mut(&session).ok_or(AbortReason::OutOfOrder)?;
        if s.state != SessionState::Challenged {
            return Err(AbortReason::OutOfOrder);
        }
        let Some(bid) = ledger.contract(&s.contract) else {
            return Err(s.abort(AbortReason::UnknownContract));
        };
        let u_id = *bid.update_hash();
        if !self.vendor.verify(&UpdatePackage::vendor_message(&u_id, &offer.verifying_key), &offer.vendor_sig) {
            return Err(s.abort(AbortReason::BadVendorSig));
        }
        if !proofs.verify(&offer.verifying_key, &offer.ciphertext, &offer.s, &u_id, &offer.proof) {
            return Err(s.abort(AbortReason::BadProof));
        }
        if self.signed.contains_key(&s.contract) {
            return Err(s.abort(AbortReason::AlreadySigned));
        }
        s.advance(SessionState::OfferSent)?;
        let sig = self.keys.sign(&delivery_message(&u_id, &offer.s));
        s.s = Some(offer.s);
        s.ciphertext = Some(offer.ciphertext.clone());
        s.proof = Some(offer.proof.clone());
        s.device_sig = Some(sig);
        s.advance(SessionState::SignatureReceived)?;
        self.signed.insert(
            s.contract,
            PendingUpdate {
                contract: s.contract,
                session,
                distributor: s.distributor,
                update_id: u_id,
                height: bid.deployed_height(),
                s: offer.s,
                ciphertext: offer.ciphertext.clone(),
                receipt: sig,
                completed: false,
            },
        );
        Ok(Message::DeliveryReceipt { session, sig })
    }

    /// The receipt to retransmit for a signed, still-undecrypted contract.
    pub fn retransmission(&self, contract: &Address) -> Option<(NodeId, Message)> {
        self.signed
            .get(contract)
            .filter(|p| !p.completed)
            .map(|p| (p.distributor, Message::DeliveryReceipt { session: p.session, sig: p.receipt }))
    }

    /// Handles a `KeyRevealed(pk_o, r)` event: checks `H(r) = s`, decrypts,
    /// checks integrity and installs.
    pub fn on_key_revealed(
        &mut self,
        contract: &Address,
        device: &PublicKey,
        r: &Digest,
        now: u64,
    ) -> Result<Installed, CompleteError> {
        if *device != self.keys.public() {
            return Err(CompleteError::NotForMe);
        }
        let p = self.signed.get_mut(contract).filter(|p| !p.completed).ok_or(CompleteError::NoPending)?;
        if hash(r.as_bytes()) != p.s {
            return Err(CompleteError::BindingMismatch);
        }
        let plain = decrypt(&p.ciphertext, &SymKey::derive(r));
        if hash(&plain) != p.update_id {
            return Err(CompleteError::IntegrityFailure);
        }
        p.completed = true;
        if p.height <= self.version {
            return Err(CompleteError::Downgrade);
        }
        let installed =
            Installed { contract: *contract, update_id: p.update_id, height: p.height, distributor: p.distributor, tick: now };
        self.version = p.height;
        self.firmware = Some(Arc::from(plain));
        self.installed = Some(installed.clone());
        Ok(installed)
    }

    pub fn abort_session(&mut self, session: &SessionId, reason: AbortReason) {
        if let Some(s) = self.sessions.get_mut(session) {
            s.abort(reason);
        }
    }

    /// Whether some session is still mid-exchange.
    pub fn busy(&self) -> bool {
        self.sessions.values().any(|s| !s.is_finished())
    }

    pub fn expire_sessions(&mut self, cutoff: u64) -> Vec<SessionId> {
        let mut out = Vec::new();
        for s in self.sessions.values_mut() {
            if !s.is_finished() && s.opened_at < cutoff {
                s.abort(AbortReason::PeerDisconnect);
                out.push(s.id);
            }
        }
        out
    }

    pub fn prune_sessions(&mut self) {
        self.sessions.retain(|_, s| !s.is_finished());
    }
}
