//! The proof-of-distribution bid: an escrow that pays, per listed device, the
//! first distributor to present a valid proof-of-distribution before
//! expiration, and refunds the remainder to its owner afterwards.
//!
//! Guards run in a fixed order and a rejected call changes nothing:
//!
//! 1. `now >= expiration` → [`ClaimRejection::Expired`]
//! 2. device not listed, or already claimed
//! 3. `r != H(pk_d || t)`
//! 4. `s != H(r)`
//! 5. device signature over `update_hash || s` does not verify
//!
//! A successful claim records `r`, pays `balance / (n - num_updated)` to
//! `pk_d` and emits `KeyRevealed(pk_o, r)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{hash, hash_parts, Digest, Nonce32, PublicKey, Signature};
use crate::ledger::Address;

pub const KEY_REVEALED: &str = "KeyRevealed";

/// `r = H(pk_d || t)`: binds the witness, and thus the payout, to one distributor.
pub fn witness_for(distributor: &PublicKey, t: &Nonce32) -> Digest {
    hash_parts(&[distributor.as_bytes(), t.as_bytes()])
}

/// The message a device signs to certify delivery: `U_id || s`.
pub fn delivery_message(update_hash: &Digest, s: &Digest) -> [u8; 64] {
    let mut m = [0u8; 64];
    m[..32].copy_from_slice(update_hash.as_bytes());
    m[32..].copy_from_slice(s.as_bytes());
    m
}

/// A device named either by key or by its position in the contract's list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceRef {
    Key(PublicKey),
    Index(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedeemTuple {
    pub device: DeviceRef,
    pub t: Nonce32,
    pub s: Digest,
    pub distributor: PublicKey,
    pub device_sig: Signature,
    pub r: Digest,
}

impl RedeemTuple {
    pub fn encode(&self, enc: &mut Encoder) {
        match self.device {
            DeviceRef::Key(pk) => enc.tag(0).bytes(pk.as_bytes()),
            DeviceRef::Index(i) => enc.tag(1).u64(u64::from(i)),
        };
        enc.bytes(self.t.as_bytes())
            .bytes(self.s.as_bytes())
            .bytes(self.distributor.as_bytes())
            .bytes(self.device_sig.as_bytes())
            .bytes(self.r.as_bytes());
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let device = match dec.tag()? {
            0 => DeviceRef::Key(PublicKey(dec.fixed()?)),
            1 => {
                let i = dec.u64()?;
                DeviceRef::Index(u32::try_from(i).map_err(|_| DecodeError::UnknownTag(1))?)
            }
            t => return Err(DecodeError::UnknownTag(t)),
        };
        Ok(Self {
            device,
            t: Nonce32(dec.fixed()?),
            s: Digest(dec.fixed()?),
            distributor: PublicKey(dec.fixed()?),
            device_sig: Signature(dec.fixed()?),
            r: Digest(dec.fixed()?),
        })
    }
}

/// Constructor arguments of a bid (the deposit travels with the deploy).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidTerms {
    pub expiration: u64,
    pub update_hash: Digest,
    pub package_hash: Digest,
    pub devices: Vec<PublicKey>,
}

impl BidTerms {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.expiration)
            .bytes(self.update_hash.as_bytes())
            .bytes(self.package_hash.as_bytes())
            .u64(self.devices.len() as u64);
        for d in &self.devices {
            enc.bytes(d.as_bytes());
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let expiration = dec.u64()?;
        let update_hash = Digest(dec.fixed()?);
        let package_hash = Digest(dec.fixed()?);
        let n = dec.u64()?;
        let mut devices = Vec::new();
        for _ in 0..n {
            devices.push(PublicKey(dec.fixed()?));
        }
        Ok(Self { expiration, update_hash, package_hash, devices })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimRejection {
    #[error("bid has expired")]
    Expired,
    #[error("device is not listed in the bid")]
    UnknownDevice,
    #[error("device was already claimed")]
    AlreadyClaimed,
    #[error("r is not H(pk_d || t)")]
    RMismatch,
    #[error("s is not H(r)")]
    SMismatch,
    #[error("device signature does not verify")]
    BadSignature,
    #[error("escrow is empty")]
    EmptyEscrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum WithdrawRejection {
    #[error("bid has not expired")]
    NotExpired,
    #[error("caller is not the owner")]
    NotOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum DeployError {
    #[error("device list is empty")]
    NoDevices,
    #[error("device {0} listed twice")]
    DuplicateDevice(PublicKey),
}

/// Entry of the device table: the device's list position and its revealed key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceSlot {
    pub index: u32,
    pub r: Option<Digest>,
}

/// Effects of an accepted claim, applied by the hosting ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payout {
    pub device: PublicKey,
    pub to: Address,
    pub amount: u64,
    pub r: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidContract {
    owner: Address,
    deployed_height: u64,
    deployed_at: u64,
    expiration: u64,
    update_hash: Digest,
    package_hash: Digest,
    devices: Vec<PublicKey>,
    table: BTreeMap<PublicKey, DeviceSlot>,
    num_updated: u64,
    balance: u64,
    deposit: u64,
    paid_out: u64,
    refunded: u64,
}

impl BidContract {
    /// An expiration at or before the deploy tick is accepted: such a bid is
    /// born expired and can only be refunded.
    pub fn construct(
        owner: Address,
        terms: BidTerms,
        deposit: u64,
        deployed_height: u64,
        deployed_at: u64,
    ) -> Result<Self, DeployError> {
        if terms.devices.is_empty() {
            return Err(DeployError::NoDevices);
        }
        let mut table = BTreeMap::new();
        for (i, d) in terms.devices.iter().enumerate() {
            if table.insert(*d, DeviceSlot { index: i as u32, r: None }).is_some() {
                return Err(DeployError::DuplicateDevice(*d));
            }
        }
        Ok(Self {
            owner,
            deployed_height,
            deployed_at,
            expiration: terms.expiration,
            update_hash: terms.update_hash,
            package_hash: terms.package_hash,
            devices: terms.devices,
            table,
            num_updated: 0,
            balance: deposit,
            deposit,
            paid_out: 0,
            refunded: 0,
        })
    }

    pub fn publish_proof(&mut self, tuple: &RedeemTuple, now: u64) -> Result<Payout, ClaimRejection> {
        if now >= self.expiration {
            return Err(ClaimRejection::Expired);
        }
        let device = self.resolve(&tuple.device).ok_or(ClaimRejection::UnknownDevice)?;
        match self.table.get(&device) {
            None => return Err(ClaimRejection::UnknownDevice),
            Some(DeviceSlot { r: Some(_), .. }) => return Err(ClaimRejection::AlreadyClaimed),
            Some(_) => {}
        }
        if tuple.r != witness_for(&tuple.distributor, &tuple.t) {
            return Err(ClaimRejection::RMismatch);
        }
        if tuple.s != hash(tuple.r.as_bytes()) {
            return Err(ClaimRejection::SMismatch);
        }
        if !device.verify(&delivery_message(&self.update_hash, &tuple.s), &tuple.device_sig) {
            return Err(ClaimRejection::BadSignature);
        }
        if self.balance == 0 {
            return Err(ClaimRejection::EmptyEscrow);
        }

        let remaining = self.n() - self.num_updated;
        let amount = self.balance / remaining;
        if let Some(slot) = self.table.get_mut(&device) {
            slot.r = Some(tuple.r);
        }
        self.balance -= amount;
        self.paid_out += amount;
        self.num_updated += 1;
        Ok(Payout { device, to: Address::from(tuple.distributor), amount, r: tuple.r })
    }

    pub fn withdraw_funds(&mut self, caller: &Address, now: u64) -> Result<u64, WithdrawRejection> {
        if now < self.expiration {
            return Err(WithdrawRejection::NotExpired);
        }
        if *caller != self.owner {
            return Err(WithdrawRejection::NotOwner);
        }
        let amount = core::mem::take(&mut self.balance);
        self.refunded += amount;
        Ok(amount)
    }

    pub fn resolve(&self, device: &DeviceRef) -> Option<PublicKey> {
        match device {
            DeviceRef::Key(pk) => Some(*pk),
            DeviceRef::Index(i) => self.devices.get(*i as usize).copied(),
        }
    }

    pub fn index_of(&self, device: &PublicKey) -> Option<u32> {
        self.table.get(device).map(|slot| slot.index)
    }

    pub fn is_member(&self, device: &PublicKey) -> bool {
        self.table.contains_key(device)
    }

    /// `Some(None)` for a listed device not yet claimed.
    pub fn revealed(&self, device: &PublicKey) -> Option<Option<Digest>> {
        self.table.get(device).map(|slot| slot.r)
    }

    pub fn table(&self) -> &BTreeMap<PublicKey, DeviceSlot> {
        &self.table
    }

    pub fn owner(&self) -> &Address {
        &self.owner
    }
    pub fn deployed_height(&self) -> u64 {
        self.deployed_height
    }
    pub fn deployed_at(&self) -> u64 {
        self.deployed_at
    }
    pub fn expiration(&self) -> u64 {
        self.expiration
    }
    pub fn update_hash(&self) -> &Digest {
        &self.update_hash
    }
    pub fn package_hash(&self) -> &Digest {
        &self.package_hash
    }
    pub fn devices(&self) -> &[PublicKey] {
        &self.devices
    }
    pub fn n(&self) -> u64 {
        self.devices.len() as u64
    }
    pub fn num_updated(&self) -> u64 {
        self.num_updated
    }
    pub fn balance(&self) -> u64 {
        self.balance
    }
    pub fn deposit(&self) -> u64 {
        self.deposit
    }
    pub fn paid_out(&self) -> u64 {
        self.paid_out
    }
    pub fn refunded(&self) -> u64 {
        self.refunded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Bid {
        vendor: KeyPair,
        devices: Vec<KeyPair>,
        contract: BidContract,
    }

    fn bid(rng: &mut ChaCha8Rng, n: usize, deposit: u64, expiration: u64) -> Bid {
        let vendor = KeyPair::generate(rng);
        let devices: Vec<_> = (0..n).map(|_| KeyPair::generate(rng)).collect();
        let terms = BidTerms {
            expiration,
            update_hash: hash(b"update"),
            package_hash: hash(b"package"),
            devices: devices.iter().map(KeyPair::public).collect(),
        };
        let contract = BidContract::construct(vendor.public().into(), terms, deposit, 1, 10).unwrap();
        Bid { vendor, devices, contract }
    }

    fn tuple_for(rng: &mut ChaCha8Rng, device: &KeyPair, distributor: &PublicKey) -> RedeemTuple {
        let t = Nonce32::random(rng);
        let r = witness_for(distributor, &t);
        let s = hash(r.as_bytes());
        RedeemTuple {
            device: DeviceRef::Key(device.public()),
            t,
            s,
            distributor: *distributor,
            device_sig: device.sign(&delivery_message(&hash(b"update"), &s)),
            r,
        }
    }

    #[test]
    fn constructor_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = bid(&mut rng, 4, 100, 1000);
        assert_eq!((b.contract.balance(), b.contract.n(), b.contract.num_updated()), (100, 4, 0));
    }

    #[test]
    fn constructor_rejects_bad_device_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = KeyPair::generate(&mut rng).public();
        let mut terms = BidTerms {
            expiration: 10,
            update_hash: hash(b"u"),
            package_hash: hash(b"p"),
            devices: alloc::vec![k, k],
        };
        assert_eq!(
            BidContract::construct(k.into(), terms.clone(), 1, 1, 1),
            Err(DeployError::DuplicateDevice(k))
        );
        terms.devices.clear();
        assert_eq!(BidContract::construct(k.into(), terms, 1, 1, 1), Err(DeployError::NoDevices));
    }

    #[test]
    fn payouts_with_remainder() {
        // 100 over 3: 100/3 = 33, 67/2 = 33, 34/1 = 34.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = bid(&mut rng, 3, 100, 1000);
        let d = KeyPair::generate(&mut rng).public();
        let mut paid = Vec::new();
        for dev in &b.devices {
            let t = tuple_for(&mut rng, dev, &d);
            paid.push(b.contract.publish_proof(&t, 500).unwrap().amount);
        }
        assert_eq!(paid, [33, 33, 34]);
        assert_eq!(b.contract.balance(), 0);
    }

    #[test]
    fn single_claim_then_duplicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut b = bid(&mut rng, 4, 100, 1000);
        let d = KeyPair::generate(&mut rng).public();
        let t = tuple_for(&mut rng, &b.devices[0], &d);
        let p = b.contract.publish_proof(&t, 500).unwrap();
        assert_eq!((p.amount, p.to, p.r), (25, Address::from(d), t.r));
        assert_eq!(b.contract.balance(), 75);
        assert_eq!(b.contract.revealed(&b.devices[0].public()), Some(Some(t.r)));
        let again = tuple_for(&mut rng, &b.devices[0], &d);
        assert_eq!(b.contract.publish_proof(&again, 501), Err(ClaimRejection::AlreadyClaimed));
    }

    #[test]
    fn expiration_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = bid(&mut rng, 2, 100, 1000);
        let d = KeyPair::generate(&mut rng).public();
        let t = tuple_for(&mut rng, &b.devices[0], &d);
        assert_eq!(b.contract.publish_proof(&t, 1000), Err(ClaimRejection::Expired));
        assert!(b.contract.publish_proof(&t, 999).is_ok());
    }

    #[test]
    fn front_running_payee_swap_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut b = bid(&mut rng, 2, 100, 1000);
        let honest = KeyPair::generate(&mut rng).public();
        let thief = KeyPair::generate(&mut rng).public();
        let mut t = tuple_for(&mut rng, &b.devices[0], &honest);
        t.distributor = thief;
        assert_eq!(b.contract.publish_proof(&t, 1), Err(ClaimRejection::RMismatch));
        assert_eq!(b.contract.num_updated(), 0);
    }

    #[test]
    fn non_member_signature_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut b = bid(&mut rng, 2, 100, 1000);
        let d = KeyPair::generate(&mut rng).public();
        let outsider = KeyPair::generate(&mut rng);
        let mut t = tuple_for(&mut rng, &outsider, &d);
        t.device = DeviceRef::Key(b.devices[1].public());
        assert_eq!(b.contract.publish_proof(&t, 1), Err(ClaimRejection::BadSignature));
        let t = tuple_for(&mut rng, &outsider, &d);
        assert_eq!(b.contract.publish_proof(&t, 1), Err(ClaimRejection::UnknownDevice));
    }

    #[test]
    fn claim_by_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut b = bid(&mut rng, 3, 90, 1000);
        let d = KeyPair::generate(&mut rng).public();
        let mut t = tuple_for(&mut rng, &b.devices[2], &d);
        t.device = DeviceRef::Index(b.contract.index_of(&b.devices[2].public()).unwrap());
        assert_eq!(b.contract.publish_proof(&t, 1).unwrap().amount, 30);
        t.device = DeviceRef::Index(3);
        assert_eq!(b.contract.publish_proof(&t, 1), Err(ClaimRejection::UnknownDevice));
    }

    #[test]
    fn withdraw_guards() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = bid(&mut rng, 2, 50, 1000);
        let owner = Address::from(b.vendor.public());
        let stranger = Address::from(KeyPair::generate(&mut rng).public());
        assert_eq!(b.contract.withdraw_funds(&owner, 999), Err(WithdrawRejection::NotExpired));
        assert_eq!(b.contract.withdraw_funds(&stranger, 1200), Err(WithdrawRejection::NotOwner));
        assert_eq!(b.contract.withdraw_funds(&owner, 1200), Ok(50));
        assert_eq!(b.contract.balance(), 0);
        assert_eq!(b.contract.withdraw_funds(&owner, 1300), Ok(0));
    }

    #[test]
    fn zero_deposit_rejects_every_claim() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut b = bid(&mut rng, 2, 0, 1000);
        let d = KeyPair::generate(&mut rng).public();
        for dev in &b.devices {
            let t = tuple_for(&mut rng, dev, &d);
            assert_eq!(b.contract.publish_proof(&t, 1), Err(ClaimRejection::EmptyEscrow));
        }
        assert_eq!(b.contract.num_updated(), 0);
    }

    #[test]
    fn born_expired_bid_refunds_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b = bid(&mut rng, 2, 70, 5);
        let d = KeyPair::generate(&mut rng).public();
        let t = tuple_for(&mut rng, &b.devices[0], &d);
        assert_eq!(b.contract.publish_proof(&t, 10), Err(ClaimRejection::Expired));
        assert_eq!(b.contract.withdraw_funds(&b.vendor.public().into(), 10), Ok(70));
    }

    #[test]
    fn tuple_codec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dev = KeyPair::generate(&mut rng);
        let mut t = tuple_for(&mut rng, &dev, &dev.public());
        for device in [DeviceRef::Key(dev.public()), DeviceRef::Index(7)] {
            t.device = device;
            let mut e = Encoder::new();
            t.encode(&mut e);
            let bytes = e.finish();
            let mut d = Decoder::new(&bytes);
            assert_eq!(RedeemTuple::decode(&mut d).unwrap(), t);
            d.finish().unwrap();
        }
    }
}
