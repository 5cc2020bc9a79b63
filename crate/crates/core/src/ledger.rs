//! In-memory permissionless ledger: balances, totally ordered blocks,
//! hosted bid contracts and an append-only event log.
//!
//! The ledger has a single writer (the simulation scheduler) that submits
//! transactions into a pending pool and seals blocks at strictly increasing
//! timestamps. Each transaction executes atomically: a failing guard leaves
//! every balance and contract untouched, but the transaction is still
//! included with its failure recorded in the block receipt. There are no
//! fees, gas or consensus.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::contract::{
    BidContract, BidTerms, ClaimRejection, DeployError, RedeemTuple, WithdrawRejection, KEY_REVEALED,
};
use crate::crypto::{hash, hash_parts, Digest, KeyPair, PublicKey, Signature};

hex_bytes!(
    /// Account or contract address. Account addresses are the owner's public key.
    Address,
    32
);

impl From<PublicKey> for Address {
    fn from(pk: PublicKey) -> Self {
        Address(pk.0)
    }
}

impl Address {
    pub fn as_public_key(&self) -> PublicKey {
        PublicKey(self.0)
    }
}

/// Registry whose events announce every new bid contract.
pub const FACTORY_ADDRESS: Address = Address([0xfa; 32]);
pub const BID_CREATED: &str = "BidCreated";

const TX_DOMAIN: &[u8] = b"podnet/tx/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub address: Address,
    pub balance: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum ContractCall {
    PublishProof(RedeemTuple),
    WithdrawFunds,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Transfer { to: Address, amount: u64 },
    Deploy { terms: BidTerms, deposit: u64 },
    Call { contract: Address, call: ContractCall },
}

impl Payload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::Transfer { to, amount } => {
                enc.tag(0).bytes(to.as_bytes()).u64(*amount);
            }
            Payload::Deploy { terms, deposit } => {
                enc.tag(1).u64(*deposit);
                terms.encode(enc);
            }
            Payload::Call { contract, call } => {
                enc.tag(2).bytes(contract.as_bytes());
                match call {
                    ContractCall::PublishProof(tuple) => {
                        enc.tag(0);
                        tuple.encode(enc);
                    }
                    ContractCall::WithdrawFunds => {
                        enc.tag(1);
                    }
                }
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.tag()? {
            0 => Payload::Transfer { to: Address(dec.fixed()?), amount: dec.u64()? },
            1 => {
                let deposit = dec.u64()?;
                Payload::Deploy { terms: BidTerms::decode(dec)?, deposit }
            }
            2 => {
                let contract = Address(dec.fixed()?);
                let call = match dec.tag()? {
                    0 => ContractCall::PublishProof(RedeemTuple::decode(dec)?),
                    1 => ContractCall::WithdrawFunds,
                    t => return Err(DecodeError::UnknownTag(t)),
                };
                Payload::Call { contract, call }
            }
            t => return Err(DecodeError::UnknownTag(t)),
        })
    }

    /// Coins leaving the sender's account if the transaction succeeds.
    pub fn debit(&self) -> u64 {
        match self {
            Payload::Transfer { amount, .. } => *amount,
            Payload::Deploy { deposit, .. } => *deposit,
            Payload::Call { .. } => 0,
        }
    }
}

/// A signed transaction. Serialized (and signed) in the canonical tuple
/// encoding; serde renders it as the hex of that encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub sender: PublicKey,
    pub nonce: u64,
    pub payload: Payload,
    pub signature: Signature,
}

impl Transaction {
    fn signing_bytes(sender: &PublicKey, nonce: u64, payload: &Payload) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(TX_DOMAIN).bytes(sender.as_bytes()).u64(nonce);
        payload.encode(&mut enc);
        enc.finish()
    }

    pub fn signed(keys: &KeyPair, nonce: u64, payload: Payload) -> Self {
        let sender = keys.public();
        let signature = keys.sign(&Self::signing_bytes(&sender, nonce, &payload));
        Self { sender, nonce, payload, signature }
    }

    pub fn verify(&self) -> bool {
        self.sender
            .verify(&Self::signing_bytes(&self.sender, self.nonce, &self.payload), &self.signature)
    }

    pub fn sender_address(&self) -> Address {
        Address::from(self.sender)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(self.sender.as_bytes()).u64(self.nonce);
        self.payload.encode(&mut enc);
        enc.bytes(self.signature.as_bytes());
        enc.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let sender = PublicKey(dec.fixed()?);
        let nonce = dec.u64()?;
        let payload = Payload::decode(&mut dec)?;
        let signature = Signature(dec.fixed()?);
        dec.finish()?;
        Ok(Self { sender, nonce, payload, signature })
    }

    pub fn id(&self) -> Digest {
        hash(&self.encode())
    }
}

impl Serialize for Transaction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.encode()))
    }
}

impl<'de> Deserialize<'de> for Transaction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let raw = hex::decode(s).map_err(serde::de::Error::custom)?;
        Transaction::decode(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case", tag = "reason", content = "detail")]
pub enum TxFailure {
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("no contract at target address")]
    UnknownContract,
    #[error("deploy rejected: {0}")]
    Deploy(DeployError),
    #[error("claim rejected: {0}")]
    Claim(ClaimRejection),
    #[error("withdraw rejected: {0}")]
    Withdraw(WithdrawRejection),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum TxOutcome {
    Transferred,
    Deployed { contract: Address },
    Paid { device: PublicKey, to: Address, amount: u64 },
    Refunded { amount: u64 },
    Failed { failure: TxFailure },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx: Digest,
    #[serde(flatten)]
    pub outcome: TxOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub contract: Address,
    pub name: String,
    #[serde(with = "hex_list")]
    pub args: Vec<Vec<u8>>,
    pub block_height: u64,
}

mod hex_list {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(args: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(args.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| hex::decode(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("transaction signature does not verify for its sender")]
    BadSignature,
    #[error("balance {available} does not cover {required}")]
    InsufficientBalance { available: u64, required: u64 },
    #[error("nonce {0} already used by this sender")]
    DuplicateNonce(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("block timestamp {requested} does not exceed previous timestamp {previous}")]
pub struct SealError {
    pub previous: u64,
    pub requested: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingHandle {
    pub tx: Digest,
}

/// Cursor over events of one (contract, name) pair. A fresh subscription
/// replays every past event before delivering new ones.
#[derive(Clone, Debug)]
pub struct Subscription {
    contract: Address,
    name: String,
    cursor: usize,
}

impl Subscription {
    pub fn poll<'l>(&mut self, ledger: &'l Ledger) -> Vec<&'l LedgerEvent> {
        let Some(idx) = ledger.index.get(&(self.contract, self.name.clone())) else {
            return Vec::new();
        };
        let fresh: Vec<_> = idx[self.cursor..].iter().map(|&i| &ledger.events[i]).collect();
        self.cursor = idx.len();
        fresh
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub height: u64,
    pub timestamp: u64,
    pub issuance: u64,
    pub accounts: BTreeMap<Address, u64>,
    pub contracts: BTreeMap<Address, BidContract>,
    pub events: Vec<LedgerEvent>,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
pub struct Ledger {
    accounts: BTreeMap<Address, u64>,
    contracts: BTreeMap<Address, BidContract>,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    pending_debits: BTreeMap<Address, u64>,
    used_nonces: BTreeSet<(Address, u64)>,
    events: Vec<LedgerEvent>,
    index: BTreeMap<(Address, String), Vec<usize>>,
    issuance: u64,
}

impl Ledger {
    /// Starts a chain whose block 0 (timestamp 0) carries the given allocations.
    pub fn genesis<I: IntoIterator<Item = (Address, u64)>>(allocations: I) -> Self {
        let mut accounts = BTreeMap::new();
        let mut issuance = 0u64;
        for (addr, amount) in allocations {
            *accounts.entry(addr).or_insert(0) += amount;
            issuance += amount;
        }
        let genesis = Block { height: 0, timestamp: 0, transactions: Vec::new(), receipts: Vec::new() };
        Self {
            accounts,
            contracts: BTreeMap::new(),
            blocks: alloc::vec![genesis],
            pending: Vec::new(),
            pending_debits: BTreeMap::new(),
            used_nonces: BTreeSet::new(),
            events: Vec::new(),
            index: BTreeMap::new(),
            issuance,
        }
    }

    /// Address a deploy from `deployer` with `nonce` will create.
    pub fn contract_address(deployer: &PublicKey, nonce: u64) -> Address {
        Address(hash_parts(&[b"podnet/contract", deployer.as_bytes(), &nonce.to_be_bytes()]).0)
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<PendingHandle, SubmitError> {
        if !tx.verify() {
            return Err(SubmitError::BadSignature);
        }
        let sender = tx.sender_address();
        if self.used_nonces.contains(&(sender, tx.nonce)) {
            return Err(SubmitError::DuplicateNonce(tx.nonce));
        }
        let reserved = self.pending_debits.get(&sender).copied().unwrap_or(0);
        let available = self.balance(&sender).saturating_sub(reserved);
        let required = tx.payload.debit();
        if required > available {
            return Err(SubmitError::InsufficientBalance { available, required });
        }
        if required > 0 {
            *self.pending_debits.entry(sender).or_insert(0) += required;
        }
        self.used_nonces.insert((sender, tx.nonce));
        let handle = PendingHandle { tx: tx.id() };
        self.pending.push(tx);
        Ok(handle)
    }

    /// Drains the pending pool, in submission order, into a new block.
    pub fn seal_block(&mut self, timestamp: u64) -> Result<&Block, SealError> {
        let previous = self.timestamp();
        if timestamp <= previous {
            return Err(SealError { previous, requested: timestamp });
        }
        let height = self.height() + 1;
        let transactions = core::mem::take(&mut self.pending);
        self.pending_debits.clear();
        let receipts = transactions
            .iter()
            .map(|tx| Receipt { tx: tx.id(), outcome: self.execute(tx, height, timestamp) })
            .collect();
        self.blocks.push(Block { height, timestamp, transactions, receipts });
        Ok(self.blocks.last().unwrap())
    }

    fn execute(&mut self, tx: &Transaction, height: u64, now: u64) -> TxOutcome {
        let sender = tx.sender_address();
        let failed = |failure| TxOutcome::Failed { failure };
        match &tx.payload {
            Payload::Transfer { to, amount } => {
                if !self.debit(&sender, *amount) {
                    return failed(TxFailure::InsufficientBalance);
                }
                self.credit(to, *amount);
                TxOutcome::Transferred
            }
            Payload::Deploy { terms, deposit } => {
                if self.balance(&sender) < *deposit {
                    return failed(TxFailure::InsufficientBalance);
                }
                let contract =
                    match BidContract::construct(sender, terms.clone(), *deposit, height, now) {
                        Ok(c) => c,
                        Err(e) => return failed(TxFailure::Deploy(e)),
                    };
                self.debit(&sender, *deposit);
                let address = Self::contract_address(&tx.sender, tx.nonce);
                self.contracts.insert(address, contract);
                self.emit(
                    FACTORY_ADDRESS,
                    BID_CREATED,
                    alloc::vec![tx.sender.0.to_vec(), address.0.to_vec()],
                    height,
                );
                TxOutcome::Deployed { contract: address }
            }
            Payload::Call { contract, call } => {
                let Some(bid) = self.contracts.get_mut(contract) else {
                    return failed(TxFailure::UnknownContract);
                };
                match call {
                    ContractCall::PublishProof(tuple) => match bid.publish_proof(tuple, now) {
                        Ok(payout) => {
                            self.credit(&payout.to, payout.amount);
                            self.emit(
                                *contract,
                                KEY_REVEALED,
                                alloc::vec![payout.device.0.to_vec(), payout.r.0.to_vec()],
                                height,
                            );
                            TxOutcome::Paid { device: payout.device, to: payout.to, amount: payout.amount }
                        }
                        Err(e) => failed(TxFailure::Claim(e)),
                    },
                    ContractCall::WithdrawFunds => match bid.withdraw_funds(&sender, now) {
                        Ok(amount) => {
                            let owner = *bid.owner();
                            self.credit(&owner, amount);
                            TxOutcome::Refunded { amount }
                        }
                        Err(e) => failed(TxFailure::Withdraw(e)),
                    },
                }
            }
        }
    }

    fn debit(&mut self, addr: &Address, amount: u64) -> bool {
        match self.accounts.get_mut(addr) {
            Some(bal) if *bal >= amount => {
                *bal -= amount;
                true
            }
            _ => amount == 0,
        }
    }

    fn credit(&mut self, addr: &Address, amount: u64) {
        *self.accounts.entry(*addr).or_insert(0) += amount;
    }

    fn emit(&mut self, contract: Address, name: &str, args: Vec<Vec<u8>>, block_height: u64) {
        let i = self.events.len();
        self.events.push(LedgerEvent { contract, name: name.to_string(), args, block_height });
        self.index.entry((contract, name.to_string())).or_default().push(i);
    }

    pub fn subscribe(&self, contract: Address, name: &str) -> Subscription {
        Subscription { contract, name: name.to_string(), cursor: 0 }
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.accounts.get(addr).copied().unwrap_or(0)
    }

    pub fn accounts(&self) -> impl Iterator<Item = Account> + '_ {
        self.accounts.iter().map(|(a, b)| Account { address: *a, balance: *b })
    }

    pub fn contract(&self, addr: &Address) -> Option<&BidContract> {
        self.contracts.get(addr)
    }

    pub fn contracts(&self) -> &BTreeMap<Address, BidContract> {
        &self.contracts
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.height)
    }

    pub fn timestamp(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.timestamp)
    }

    pub fn issuance(&self) -> u64 {
        self.issuance
    }

    /// Sum of account and contract balances; equals [`Self::issuance`] at every height.
    pub fn total_supply(&self) -> u64 {
        self.accounts.values().sum::<u64>() + self.contracts.values().map(BidContract::balance).sum::<u64>()
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            height: self.height(),
            timestamp: self.timestamp(),
            issuance: self.issuance,
            accounts: self.accounts.clone(),
            contracts: self.contracts.clone(),
            events: self.events.clone(),
            blocks: self.blocks.clone(),
        }
    }

    /// Rebuilds a ledger by re-executing recorded blocks from genesis.
    pub fn replay<'b, I>(allocations: BTreeMap<Address, u64>, blocks: I) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = &'b Block>,
    {
        let mut ledger = Self::genesis(allocations);
        for block in blocks.into_iter().filter(|b| b.height > 0) {
            for tx in &block.transactions {
                ledger.submit(tx.clone()).map_err(|e| ReplayError::Submit(block.height, e))?;
            }
            let sealed = ledger
                .seal_block(block.timestamp)
                .map_err(|e| ReplayError::Seal(block.height, e))?;
            if sealed != block {
                return Err(ReplayError::Diverged(block.height));
            }
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("block {0}: transaction rejected on submit: {1}")]
    Submit(u64, SubmitError),
    #[error("block {0}: {1}")]
    Seal(u64, SealError),
    #[error("block {0}: re-execution produced a different block")]
    Diverged(u64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{delivery_message, witness_for, DeviceRef};
    use crate::crypto::Nonce32;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn keys(rng: &mut ChaCha8Rng, n: usize) -> Vec<KeyPair> {
        (0..n).map(|_| KeyPair::generate(rng)).collect()
    }

    fn transfer(from: &KeyPair, nonce: u64, to: &KeyPair, amount: u64) -> Transaction {
        Transaction::signed(from, nonce, Payload::Transfer { to: to.public().into(), amount })
    }

    #[test]
    fn transfer_applies_on_seal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = keys(&mut rng, 2);
        let (a, b) = (Address::from(k[0].public()), Address::from(k[1].public()));
        let mut l = Ledger::genesis([(a, 50)]);
        l.submit(transfer(&k[0], 0, &k[1], 10)).unwrap();
        assert_eq!(l.balance(&a), 50);
        l.seal_block(1).unwrap();
        assert_eq!((l.balance(&a), l.balance(&b)), (40, 10));
    }

    #[test]
    fn overdraft_and_forgery_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = keys(&mut rng, 2);
        let a = Address::from(k[0].public());
        let mut l = Ledger::genesis([(a, 50)]);
        assert_eq!(
            l.submit(transfer(&k[0], 0, &k[1], 60)),
            Err(SubmitError::InsufficientBalance { available: 50, required: 60 })
        );
        let mut forged = transfer(&k[1], 0, &k[1], 10);
        forged.sender = k[0].public();
        assert_eq!(l.submit(forged), Err(SubmitError::BadSignature));
        l.submit(transfer(&k[0], 0, &k[1], 30)).unwrap();
        assert!(matches!(
            l.submit(transfer(&k[0], 1, &k[1], 30)),
            Err(SubmitError::InsufficientBalance { available: 20, .. })
        ));
        assert_eq!(l.submit(transfer(&k[0], 0, &k[1], 1)), Err(SubmitError::DuplicateNonce(0)));
        assert_eq!(l.balance(&a), 50);
    }

    #[test]
    fn block_order_and_monotonic_timestamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = keys(&mut rng, 2);
        let mut l = Ledger::genesis([(k[0].public().into(), 100)]);
        let txs: Vec<_> = (0..3).map(|i| transfer(&k[0], i, &k[1], 1)).collect();
        for tx in &txs {
            l.submit(tx.clone()).unwrap();
        }
        let block = l.seal_block(5).unwrap();
        assert_eq!(block.transactions, txs);
        assert_eq!(block.height, 1);
        assert_eq!(l.seal_block(5).unwrap_err(), SealError { previous: 5, requested: 5 });
    }

    struct Deployed {
        ledger: Ledger,
        vendor: KeyPair,
        devices: Vec<KeyPair>,
        contract: Address,
    }

    fn deploy(rng: &mut ChaCha8Rng, deposit: u64) -> Deployed {
        let vendor = KeyPair::generate(rng);
        let devices = keys(rng, 2);
        let mut ledger = Ledger::genesis([(vendor.public().into(), 1000)]);
        let terms = BidTerms {
            expiration: 100,
            update_hash: hash(b"u"),
            package_hash: hash(b"p"),
            devices: devices.iter().map(KeyPair::public).collect(),
        };
        ledger
            .submit(Transaction::signed(&vendor, 0, Payload::Deploy { terms, deposit }))
            .unwrap();
        ledger.seal_block(1).unwrap();
        let contract = Ledger::contract_address(&vendor.public(), 0);
        Deployed { ledger, vendor, devices, contract }
    }

    fn claim(rng: &mut ChaCha8Rng, d: &Deployed, distributor: &KeyPair, dev: usize, nonce: u64) -> Transaction {
        let t = Nonce32::random(rng);
        let r = witness_for(&distributor.public(), &t);
        let s = hash(r.as_bytes());
        let tuple = RedeemTuple {
            device: DeviceRef::Key(d.devices[dev].public()),
            t,
            s,
            distributor: distributor.public(),
            device_sig: d.devices[dev].sign(&delivery_message(&hash(b"u"), &s)),
            r,
        };
        Transaction::signed(
            distributor,
            nonce,
            Payload::Call { contract: d.contract, call: ContractCall::PublishProof(tuple) },
        )
    }

    #[test]
    fn deploy_escrows_and_announces() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = deploy(&mut rng, 100);
        assert_eq!(d.ledger.contract(&d.contract).unwrap().balance(), 100);
        assert_eq!(d.ledger.balance(&d.vendor.public().into()), 900);
        let mut sub = d.ledger.subscribe(FACTORY_ADDRESS, BID_CREATED);
        let events = sub.poll(&d.ledger);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].args, [d.vendor.public().0.to_vec(), d.contract.0.to_vec()]);
        assert_eq!(d.ledger.total_supply(), 1000);
    }

    #[test]
    fn zero_deposit_deploys() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = deploy(&mut rng, 0);
        assert_eq!(d.ledger.contract(&d.contract).unwrap().balance(), 0);
    }

    #[test]
    fn key_revealed_replay_and_filtering() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut d = deploy(&mut rng, 100);
        let dist = KeyPair::generate(&mut rng);
        let mut empty = d.ledger.subscribe(d.contract, KEY_REVEALED);
        assert!(empty.poll(&d.ledger).is_empty());
        let c0 = claim(&mut rng, &d, &dist, 0, 0);
        let c1 = claim(&mut rng, &d, &dist, 1, 1);
        d.ledger.submit(c0).unwrap();
        d.ledger.seal_block(2).unwrap();
        d.ledger.submit(c1).unwrap();
        d.ledger.seal_block(3).unwrap();
        let mut late = d.ledger.subscribe(d.contract, KEY_REVEALED);
        let evs = late.poll(&d.ledger);
        assert_eq!(evs.len(), 2);
        assert_eq!(evs[0].args[0], d.devices[0].public().0.to_vec());
        assert_eq!(evs[1].args[0], d.devices[1].public().0.to_vec());
        assert!(late.poll(&d.ledger).is_empty());
        let mut wrong_name = d.ledger.subscribe(d.contract, "Other");
        assert!(wrong_name.poll(&d.ledger).is_empty());
        assert_eq!(d.ledger.balance(&dist.public().into()), 100);
        assert_eq!(d.ledger.total_supply(), 1000);
    }

    #[test]
    fn failed_guard_is_included_without_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = deploy(&mut rng, 100);
        let dist = KeyPair::generate(&mut rng);
        let before = d.ledger.contract(&d.contract).unwrap().clone();
        let withdraw = Transaction::signed(
            &d.vendor,
            1,
            Payload::Call { contract: d.contract, call: ContractCall::WithdrawFunds },
        );
        let c = claim(&mut rng, &d, &dist, 0, 0);
        let id = c.id();
        d.ledger.submit(withdraw).unwrap();
        d.ledger.submit(c.clone()).unwrap();
        d.ledger.submit(c).unwrap_err();
        let block = d.ledger.seal_block(2).unwrap().clone();
        assert_eq!(block.transactions.len(), 2);
        assert_eq!(
            block.receipts[0].outcome,
            TxOutcome::Failed { failure: TxFailure::Withdraw(WithdrawRejection::NotExpired) }
        );
        assert_eq!(block.receipts[1].tx, id);
        assert!(matches!(block.receipts[1].outcome, TxOutcome::Paid { amount: 50, .. }));
        let after = d.ledger.contract(&d.contract).unwrap();
        assert_eq!(after.num_updated(), before.num_updated() + 1);
    }

    #[test]
    fn transaction_codec_and_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut d = deploy(&mut rng, 100);
        let dist = KeyPair::generate(&mut rng);
        let c = claim(&mut rng, &d, &dist, 1, 0);
        assert_eq!(Transaction::decode(&c.encode()).unwrap(), c);
        d.ledger.submit(c).unwrap();
        d.ledger.seal_block(7).unwrap();
        let snap = d.ledger.snapshot();
        let genesis = [(d.vendor.public().into(), 1000)].into_iter().collect();
        let replayed = Ledger::replay(genesis, &snap.blocks).unwrap();
        assert_eq!(replayed.snapshot(), snap);
    }
}
