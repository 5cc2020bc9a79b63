use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::contract::ClaimRejection;
use crate::crypto::{Digest, PublicKey};
use crate::dsn::NodeId;
use crate::ledger::Address;
use crate::protocol::AbortReason;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payments {
    pub count: u64,
    pub total: u64,
    pub per_distributor: BTreeMap<Address, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindStats {
    pub count: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptStats {
    pub messages: u64,
    pub bytes: u64,
    pub dropped: u64,
    pub tampered: u64,
    pub by_kind: BTreeMap<String, KindStats>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryStats {
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub address: Address,
    pub owner: Address,
    pub genuine: bool,
    pub deployed_height: u64,
    pub deployed_at: u64,
    pub expiration: u64,
    pub n: u64,
    pub num_updated: u64,
    pub deposit: u64,
    pub paid_out: u64,
    pub refunded: u64,
    pub balance: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub devices_total: u64,
    pub devices_updated: u64,
    pub payments: Payments,
    pub refund: u64,
    pub ticks_to_full_coverage: Option<u64>,
    pub rejected_claims: BTreeMap<ClaimRejection, u64>,
    pub aborts: BTreeMap<AbortReason, u64>,
    pub downgrades_refused: u64,
    pub transcript: TranscriptStats,
    pub contracts: Vec<ContractReport>,
    pub adversaries: BTreeMap<String, AdversaryStats>,
    pub blocks: u64,
    pub final_tick: u64,
    pub violations: u64,
}

/// One installed update: who served it, when, and what was paid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub contract: Address,
    pub device: PublicKey,
    pub device_node: NodeId,
    pub update_id: Digest,
    pub distributor: Address,
    pub distributor_node: Option<NodeId>,
    pub signed_at: u64,
    pub installed_at: u64,
    pub block_height: u64,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Conservation,
    Supply,
    DoublePayment,
    PaidWithoutDelivery,
    PayeeMismatch,
    KeyDoesNotOpen,
    InstalledUnpaid,
    PaidAfterExpiry,
    CorruptInstall,
    Downgrade,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub contract: Option<Address>,
    pub device: Option<PublicKey>,
    pub tick: u64,
}
