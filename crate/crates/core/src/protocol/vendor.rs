use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;
use rand::RngCore;

use super::package::UpdatePackage;
use crate::contract::BidTerms;
use crate::crypto::{hash, KeyPair, ProofSystem, PublicKey};
use crate::dsn::{Blob, ContentId, Dsn, NodeId};
use crate::ledger::{Address, ContractCall, Ledger, Payload, SubmitError, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReleaseError {
    #[error("update is empty")]
    EmptyUpdate,
    #[error("device list is empty")]
    NoDevices,
    #[error("device {0} was not manufactured by this vendor")]
    UnknownDevice(PublicKey),
    #[error("deploy transaction refused: {0}")]
    Submit(SubmitError),
}

/// A published update: the pending deploy and the seeded package.
#[derive(Clone, Debug)]
pub struct Release {
    pub contract: Address,
    pub package: Arc<UpdatePackage>,
    pub terms: BidTerms,
    pub deposit: u64,
    pub deploy_tx: Transaction,
}

#[derive(Debug)]
pub struct Vendor {
    pub node: NodeId,
    keys: KeyPair,
    manufactured: BTreeSet<PublicKey>,
    nonce: u64,
    releases: Vec<Release>,
}

impl Vendor {
    pub fn new(node: NodeId, keys: KeyPair) -> Self {
        Self { node, keys, manufactured: BTreeSet::new(), nonce: 0, releases: Vec::new() }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn address(&self) -> Address {
        self.keys.public().into()
    }

    pub fn manufacture(&mut self, device: PublicKey) {
        self.manufactured.insert(device);
    }

    pub fn releases(&self) -> &[Release] {
        &self.releases
    }

    fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce - 1
    }

    /// Generates proof keys, signs the package, submits the deploy and seeds
    /// the package on the DSN. Nothing is seeded if the deploy is refused.
    /// The trapdoor is handed back to the caller and otherwise discarded.
    #[allow(clippy::too_many_arguments)]
    pub fn release_update<P: ProofSystem, R: RngCore + ?Sized>(
        &mut self,
        update: Blob,
        devices: &[PublicKey],
        deposit: u64,
        refund_window: u64,
        now: u64,
        ledger: &mut Ledger,
        dsn: &mut Dsn,
        proofs: &mut P,
        rng: &mut R,
    ) -> Result<(Release, P::Trapdoor), ReleaseError> {
        if update.is_empty() {
            return Err(ReleaseError::EmptyUpdate);
        }
        if devices.is_empty() {
            return Err(ReleaseError::NoDevices);
        }
        if let Some(d) = devices.iter().find(|d| !self.manufactured.contains(d)) {
            return Err(ReleaseError::UnknownDevice(*d));
        }
        let (keys, trapdoor) = proofs.setup(hash(&update), rng);
        let package = UpdatePackage::build(&self.keys, update, &keys);
        let terms = BidTerms {
            expiration: now + refund_window,
            update_hash: package.u_id,
            package_hash: package.p_id,
            devices: devices.to_vec(),
        };
        let nonce = self.nonce;
        let tx = Transaction::signed(&self.keys, nonce, Payload::Deploy { terms: terms.clone(), deposit });
        ledger.submit(tx.clone()).map_err(ReleaseError::Submit)?;
        self.nonce += 1;
        let package_bytes: Blob = Arc::from(package.encode());
        let id = dsn.provide(self.node, package_bytes, now);
        debug_assert_eq!(id, ContentId(package.p_id));
        let release = Release {
            contract: Ledger::contract_address(&self.keys.public(), nonce),
            package: Arc::new(package),
            terms,
            deposit,
            deploy_tx: tx,
        };
        self.releases.push(release.clone());
        Ok((release, trapdoor))
    }

    /// Stops seeding a release's package.
    pub fn stop_seeding(&self, release: &Release, dsn: &mut Dsn) {
        dsn.unprovide(self.node, &ContentId(release.package.p_id));
    }

    pub fn withdraw_tx(&mut self, contract: Address) -> Transaction {
        let nonce = self.next_nonce();
        Transaction::signed(&self.keys, nonce, Payload::Call { contract, call: ContractCall::WithdrawFunds })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SimulatedProofSystem;
    use crate::dsn::LinkModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(balance: u64) -> (Vendor, Vec<PublicKey>, Ledger, Dsn, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut vendor = Vendor::new(NodeId(0), KeyPair::generate(&mut rng));
        let devices: Vec<_> = (0..3).map(|_| KeyPair::generate(&mut rng).public()).collect();
        for d in &devices {
            vendor.manufacture(*d);
        }
        let ledger = Ledger::genesis([(vendor.address(), balance)]);
        (vendor, devices, ledger, Dsn::new(LinkModel::default()), rng)
    }

    #[test]
    fn release_deploys_and_seeds() {
        let (mut vendor, devices, mut ledger, mut dsn, mut rng) = setup(1000);
        let mut proofs = SimulatedProofSystem::new();
        let update: Blob = Arc::from(&[7u8; 4096][..]);
        let (release, _) = vendor
            .release_update(update, &devices, 100, 1000, 0, &mut ledger, &mut dsn, &mut proofs, &mut rng)
            .unwrap();
        assert_eq!(dsn.lookup(&ContentId(release.package.p_id)), [NodeId(0)]);
        ledger.seal_block(1).unwrap();
        let c = ledger.contract(&release.contract).unwrap();
        assert_eq!((c.balance(), c.n(), c.expiration()), (100, 3, 1000));
        assert_eq!(c.owner(), &vendor.address());
        assert_eq!(c.package_hash(), &release.package.p_id);
        assert_eq!(ledger.balance(&vendor.address()), 900);
    }

    #[test]
    fn refused_deploy_seeds_nothing() {
        let (mut vendor, devices, mut ledger, mut dsn, mut rng) = setup(10);
        let mut proofs = SimulatedProofSystem::new();
        let update: Blob = Arc::from(&b"u"[..]);
        let err = vendor
            .release_update(update, &devices, 100, 10, 0, &mut ledger, &mut dsn, &mut proofs, &mut rng)
            .unwrap_err();
        assert!(matches!(err, ReleaseError::Submit(SubmitError::InsufficientBalance { .. })));
        assert!(vendor.releases().is_empty());
        ledger.seal_block(1).unwrap();
        assert!(ledger.contracts().is_empty());
    }

    #[test]
    fn foreign_device_and_empty_inputs() {
        let (mut vendor, mut devices, mut ledger, mut dsn, mut rng) = setup(1000);
        let mut proofs = SimulatedProofSystem::new();
        let u: Blob = Arc::from(&b"u"[..]);
        let empty: Blob = Arc::from(&b""[..]);
        assert_eq!(
            vendor.release_update(empty, &devices, 1, 1, 0, &mut ledger, &mut dsn, &mut proofs, &mut rng).unwrap_err(),
            ReleaseError::EmptyUpdate
        );
        assert_eq!(
            vendor.release_update(u.clone(), &[], 1, 1, 0, &mut ledger, &mut dsn, &mut proofs, &mut rng).unwrap_err(),
            ReleaseError::NoDevices
        );
        let stranger = KeyPair::generate(&mut rng).public();
        devices.push(stranger);
        assert_eq!(
            vendor.release_update(u, &devices, 1, 1, 0, &mut ledger, &mut dsn, &mut proofs, &mut rng).unwrap_err(),
            ReleaseError::UnknownDevice(stranger)
        );
    }
}
