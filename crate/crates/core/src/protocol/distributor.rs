use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use rand::RngCore;

use super::messages::{challenge_message, Message, Offer};
use super::package::UpdatePackage;
use super::session::{AbortReason, ExchangeSession, Role, SessionId, SessionState};
use crate::codec::DecodeError;
use crate::contract::{delivery_message, witness_for, DeviceRef, RedeemTuple};
use crate::crypto::{encrypt, hash, KeyPair, Nonce16, Nonce32, ProofSystem, PublicKey, Signature, SymKey};
use crate::dsn::{Blob, ContentId, Dsn, FetchError, NodeId};
use crate::ledger::{Address, ContractCall, Ledger, Payload, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AcquireError {
    #[error("no such contract")]
    UnknownContract,
    #[error("contract owner is not a watched vendor")]
    UntrustedVendor,
    #[error("no live provider holds the package")]
    NoProviders,
    #[error("fetch failed: {0}")]
    Fetch(FetchError),
    #[error("package bytes do not hash to the committed package id")]
    HashMismatch,
    #[error("package does not parse: {0}")]
    Malformed(DecodeError),
    #[error("package update does not hash to the committed update id")]
    UpdateMismatch,
    #[error("vendor signature on the package does not verify")]
    BadVendorSig,
}

/// A redeem tuple this distributor has built, and its latest transaction.
#[derive(Clone, Debug)]
pub struct ClaimRecord {
    pub contract: Address,
    pub device: PublicKey,
    pub tuple: RedeemTuple,
    pub tx: Transaction,
    pub submitted_at: u64,
    pub attempts: u32,
    pub settled: bool,
}

#[derive(Debug)]
pub struct Distributor {
    pub node: NodeId,
    keys: KeyPair,
    watched: BTreeSet<PublicKey>,
    packages: BTreeMap<Address, Arc<UpdatePackage>>,
    sessions: BTreeMap<SessionId, ExchangeSession>,
    claims: BTreeMap<(Address, PublicKey), ClaimRecord>,
    nonce: u64,
    by_index: bool,
}

impl Distributor {
    pub fn new(node: NodeId, keys: KeyPair) -> Self {
        Self {
            node,
            keys,
            watched: BTreeSet::new(),
            packages: BTreeMap::new(),
            sessions: BTreeMap::new(),
            claims: BTreeMap::new(),
            nonce: 0,
            by_index: false,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn address(&self) -> Address {
        self.keys.public().into()
    }

    pub fn watch(&mut self, vendor: PublicKey) {
        self.watched.insert(vendor);
    }

    /// Refer to devices by their index in the bid instead of by key.
    pub fn claim_by_index(&mut self, on: bool) {
        self.by_index = on;
    }

    pub fn package(&self, contract: &Address) -> Option<&Arc<UpdatePackage>> {
        self.packages.get(contract)
    }

    pub fn packages(&self) -> &BTreeMap<Address, Arc<UpdatePackage>> {
        &self.packages
    }

    pub fn sessions(&self) -> &BTreeMap<SessionId, ExchangeSession> {
        &self.sessions
    }

    pub fn claims(&self) -> &BTreeMap<(Address, PublicKey), ClaimRecord> {
        &self.claims
    }

    /// Whether a newly announced contract is worth acquiring.
    pub fn wants(&self, contract: &Address, ledger: &Ledger) -> bool {
        !self.packages.contains_key(contract)
            && ledger.contract(contract).is_some_and(|c| self.watched.contains(&c.owner().as_public_key()))
    }

    /// Validates fetched package bytes against the contract and starts
    /// seeding the update and the package.
    pub fn accept_package(
        &mut self,
        contract: &Address,
        bytes: &[u8],
        ledger: &Ledger,
        dsn: &mut Dsn,
        now: u64,
    ) -> Result<Arc<UpdatePackage>, AcquireError> {
        let bid = ledger.contract(contract).ok_or(AcquireError::UnknownContract)?;
        let vendor = bid.owner().as_public_key();
        if !self.watched.contains(&vendor) {
            return Err(AcquireError::UntrustedVendor);
        }
        if hash(bytes) != *bid.package_hash() {
            return Err(AcquireError::HashMismatch);
        }
        let package = UpdatePackage::decode(bytes).map_err(AcquireError::Malformed)?;
        if package.u_id != *bid.update_hash() {
            return Err(AcquireError::UpdateMismatch);
        }
        if !package.verify_vendor(&vendor) {
            return Err(AcquireError::BadVendorSig);
        }
        let package = Arc::new(package);
        dsn.provide(self.node, package.update.clone(), now);
        dsn.provide(self.node, Blob::from(bytes), now);
        self.packages.insert(*contract, package.clone());
        Ok(package)
    }

    /// Fetches and accepts the package from the first provider that serves
    /// valid bytes, ignoring link timing.
    pub fn acquire(
        &mut self,
        contract: &Address,
        ledger: &Ledger,
        dsn: &mut Dsn,
        now: u64,
    ) -> Result<Arc<UpdatePackage>, AcquireError> {
        let bid = ledger.contract(contract).ok_or(AcquireError::UnknownContract)?;
        let id = ContentId(*bid.package_hash());
        let mut last = AcquireError::NoProviders;
        for provider in dsn.lookup(&id) {
            match dsn.fetch(self.node, provider, &id, now) {
                Ok(t) => match self.accept_package(contract, &t.bytes, ledger, dsn, now) {
                    Ok(p) => return Ok(p),
                    Err(e) => last = e,
                },
                Err(e) => last = AcquireError::Fetch(e),
            }
        }
        Err(last)
    }

    /// Step 1 to 2: answers an update request with a fresh challenge.
    pub fn on_update_request<R: RngCore + ?Sized>(
        &mut self,
        from: NodeId,
        session: SessionId,
        contract: Address,
        rng: &mut R,
        now: u64,
    ) -> Result<Message, AbortReason> {
        if session.device != from || self.sessions.get(&session).is_some_and(|s| !s.is_finished()) {
            return Err(AbortReason::OutOfOrder);
        }
        if !self.packages.contains_key(&contract) {
            return Err(AbortReason::UnknownContract);
        }
        let mut s = ExchangeSession::new(session, Role::Distributor, contract, self.node, now);
        let c = Nonce16::random(rng);
        s.challenge = Some(c);
        s.advance(SessionState::Challenged)?;
        self.sessions.insert(session, s);
        Ok(Message::Challenge { session, c })
    }

    /// Step 3 to 4: authenticates the device, then encrypts and proves.
    #[allow(clippy::too_many_arguments)]
    pub fn on_challenge_response<P: ProofSystem, R: RngCore + ?Sized>(
        &mut self,
        session: SessionId,
        device: PublicKey,
        sig: &Signature,
        ledger: &Ledger,
        proofs: &mut P,
        rng: &mut R,
    ) -> Result<Message, AbortReason> {
        let me = self.keys.public();
        let packages = &self.packages;
        let s = self.sessions.get_mut(&session).ok_or(AbortReason::OutOfOrder)?;
        if s.state != SessionState::Challenged {
            return Err(AbortReason::OutOfOrder);
        }
        let c = s.challenge.expect("challenged session holds its challenge");
        if !device.verify(&challenge_message(&c), sig) {
            return Err(s.abort(AbortReason::BadDeviceSig));
        }
        let Some(bid) = ledger.contract(&s.contract) else {
            return Err(s.abort(AbortReason::UnknownContract));
        };
        if !bid.is_member(&device) {
            return Err(s.abort(AbortReason::NonMemberDevice));
        }
        s.device_key = Some(device);
        s.advance(SessionState::Authenticated)?;

        let package = &packages[&s.contract];
        let t = Nonce32::random(rng);
        let r = witness_for(&me, &t);
        let digest_s = hash(r.as_bytes());
        let ciphertext: Blob = Arc::from(encrypt(&package.update, &SymKey::derive(&r)));
        let proof = match proofs.prove(&package.proving_key, &ciphertext, &digest_s, &package.u_id, &r) {
            Ok(p) => p,
            Err(_) => return Err(s.abort(AbortReason::ProvingFailed)),
        };
        s.t = Some(t);
        s.r = Some(r);
        s.s = Some(digest_s);
        s.ciphertext = Some(ciphertext.clone());
        s.proof = Some(proof.clone());
        s.advance(SessionState::OfferSent)?;
        Ok(Message::Offer {
            session,
            offer: Offer {
                ciphertext,
                s: digest_s,
                proof,
                verifying_key: package.verifying_key.clone(),
                vendor_sig: package.vendor_sig,
            },
        })
    }

    /// Step 5: checks the proof-of-distribution and builds the claim.
    pub fn on_delivery_receipt(
        &mut self,
        session: SessionId,
        sig: &Signature,
        ledger: &Ledger,
        now: u64,
    ) -> Result<Transaction, AbortReason> {
        let me = self.keys.public();
        let by_index = self.by_index;
        let s = self.sessions.get_mut(&session).ok_or(AbortReason::OutOfOrder)?;
        if s.state != SessionState::OfferSent {
            return Err(AbortReason::OutOfOrder);
        }
        let device = s.device_key.expect("authenticated session holds the device key");
        let u_id = self.packages[&s.contract].u_id;
        let digest_s = s.s.expect("offered session holds s");
        if !device.verify(&delivery_message(&u_id, &digest_s), sig) {
            // A bad receipt leaves the session open for a retransmission.
            return Err(AbortReason::BadReceipt);
        }
        s.device_sig = Some(*sig);
        s.advance(SessionState::SignatureReceived)?;
        s.ciphertext = None;
        s.proof = None;
        let contract = s.contract;
        let device_ref = match ledger.contract(&contract).and_then(|c| c.index_of(&device)) {
            Some(i) if by_index => DeviceRef::Index(i),
            _ => DeviceRef::Key(device),
        };
        let tuple = RedeemTuple {
            device: device_ref,
            t: s.t.expect("offered session holds t"),
            s: digest_s,
            distributor: me,
            device_sig: *sig,
            r: s.r.expect("offered session holds r"),
        };
        let tx = self.sign_claim(contract, &tuple);
        self.claims.insert(
            (contract, device),
            ClaimRecord { contract, device, tuple, tx: tx.clone(), submitted_at: now, attempts: 1, settled: false },
        );
        Ok(tx)
    }

    fn sign_claim(&mut self, contract: Address, tuple: &RedeemTuple) -> Transaction {
        let nonce = self.nonce;
        self.nonce += 1;
        Transaction::signed(
            &self.keys,
            nonce,
            Payload::Call { contract, call: ContractCall::PublishProof(tuple.clone()) },
        )
    }

    /// Re-signs an unsettled claim under a fresh nonce.
    pub fn resubmit(&mut self, contract: Address, device: PublicKey, now: u64) -> Option<Transaction> {
        let tuple = match self.claims.get(&(contract, device)) {
            Some(c) if !c.settled => c.tuple.clone(),
            _ => return None,
        };
        let tx = self.sign_claim(contract, &tuple);
        let rec = self.claims.get_mut(&(contract, device)).expect("checked above");
        rec.tx = tx.clone();
        rec.submitted_at = now;
        rec.attempts += 1;
        Some(tx)
    }

    /// Marks a claim as finished, paid or not. Returns false if unknown.
    pub fn settle(&mut self, contract: Address, device: PublicKey) -> bool {
        self.claims.get_mut(&(contract, device)).map(|c| c.settled = true).is_some()
    }

    /// Unsettled claims submitted at or before `cutoff`.
    pub fn stale_claims(&self, cutoff: u64) -> Vec<(Address, PublicKey)> {
        self.claims.values().filter(|c| !c.settled && c.submitted_at <= cutoff).map(|c| (c.contract, c.device)).collect()
    }

    /// Aborts sessions that have waited since before `cutoff`.
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

    pub fn abort_session(&mut self, session: &SessionId, reason: AbortReason) {
        if let Some(s) = self.sessions.get_mut(session) {
            s.abort(reason);
        }
    }

    /// Drops finished sessions to bound memory in long runs.
    pub fn prune_sessions(&mut self) {
        self.sessions.retain(|_, s| !s.is_finished());
    }
}
