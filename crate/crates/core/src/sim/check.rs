use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::metrics::{AuditRow, Violation, ViolationKind};
use crate::contract::KEY_REVEALED;
use crate::crypto::{decrypt, hash, Digest, PublicKey, SymKey};
use crate::dsn::{Blob, NodeId};
use crate::ledger::{Address, ContractCall, Ledger, Payload, TxOutcome};

/// A device's acceptance of an offer: the bytes it holds and what it signed.
#[derive(Clone, Debug)]
pub struct ExchangeRecord {
    pub contract: Address,
    pub device: PublicKey,
    pub distributor_node: NodeId,
    /// Account of the serving node, if it has one.
    pub distributor: Option<Address>,
    pub s: Digest,
    pub ciphertext: Blob,
    pub signed_at: u64,
}

fn violation(kind: ViolationKind, contract: Address, device: Option<PublicKey>, tick: u64) -> Violation {
    Violation { kind, contract: Some(contract), device, tick }
}

/// Recomputes every contract's flows from the block receipts and checks
/// `deposit = payouts + refunds + balance`, plus total supply.
pub fn conservation(ledger: &Ledger) -> Vec<Violation> {
    let mut flows: BTreeMap<Address, (u64, u64)> = BTreeMap::new();
    for block in ledger.blocks() {
        for (tx, receipt) in block.transactions.iter().zip(&block.receipts) {
            let Payload::Call { contract, .. } = &tx.payload else { continue };
            let f = flows.entry(*contract).or_default();
            match receipt.outcome {
                TxOutcome::Paid { amount, .. } => f.0 += amount,
                TxOutcome::Refunded { amount } => f.1 += amount,
                _ => {}
            }
        }
    }
    let tick = ledger.timestamp();
    let mut out = Vec::new();
    for (addr, c) in ledger.contracts() {
        let (paid, refunded) = flows.get(addr).copied().unwrap_or_default();
        if (paid, refunded) != (c.paid_out(), c.refunded()) || c.deposit() != paid + refunded + c.balance() {
            out.push(violation(ViolationKind::Conservation, *addr, None, tick));
        }
    }
    if ledger.total_supply() != ledger.issuance() {
        out.push(Violation { kind: ViolationKind::Supply, contract: None, device: None, tick });
    }
    out
}

/// Checks, per (contract, device): at most one payment; a payment implies
/// the device accepted an offer from the payee whose ciphertext the revealed
/// key opens to the update; an install implies exactly one payment.
pub fn fair_exchange(ledger: &Ledger, exchanges: &[ExchangeRecord], audit: &[AuditRow]) -> Vec<Violation> {
    let mut paid: BTreeMap<(Address, PublicKey), Vec<(Address, u64)>> = BTreeMap::new();
    for block in ledger.blocks() {
        for (tx, receipt) in block.transactions.iter().zip(&block.receipts) {
            let (Payload::Call { contract, call: ContractCall::PublishProof(_) }, TxOutcome::Paid { device, to, .. }) =
                (&tx.payload, &receipt.outcome)
            else {
                continue;
            };
            paid.entry((*contract, *device)).or_default().push((*to, block.timestamp));
        }
    }
    let mut revealed: BTreeMap<(Address, PublicKey), Digest> = BTreeMap::new();
    for e in ledger.events().iter().filter(|e| e.name == KEY_REVEALED) {
        if let (Some(pk), Some(r)) = (PublicKey::from_slice(&e.args[0]), Digest::from_slice(&e.args[1])) {
            revealed.insert((e.contract, pk), r);
        }
    }
    let mut records: BTreeMap<(Address, PublicKey), Vec<&ExchangeRecord>> = BTreeMap::new();
    for x in exchanges {
        records.entry((x.contract, x.device)).or_default().push(x);
    }
    let installs: BTreeMap<(Address, PublicKey), &AuditRow> = audit.iter().map(|a| ((a.contract, a.device), a)).collect();

    let mut out = Vec::new();
    for (key @ (contract, device), payments) in &paid {
        let tick = payments[0].1;
        let v = |k| violation(k, *contract, Some(*device), tick);
        if payments.len() > 1 {
            out.push(v(ViolationKind::DoublePayment));
        }
        let Some(recs) = records.get(key) else {
            out.push(v(ViolationKind::PaidWithoutDelivery));
            continue;
        };
        let Some(r) = revealed.get(key) else {
            out.push(v(ViolationKind::KeyDoesNotOpen));
            continue;
        };
        let u_id = *ledger.contract(contract).expect("paid contract exists").update_hash();
        let rec = recs.iter().find(|x| x.distributor == Some(payments[0].0));
        match rec {
            None => out.push(v(ViolationKind::PayeeMismatch)),
            Some(x) => {
                let opens = hash(r.as_bytes()) == x.s && hash(&decrypt(&x.ciphertext, &SymKey::derive(r))) == u_id;
                if !opens {
                    out.push(v(ViolationKind::KeyDoesNotOpen));
                }
            }
        }
    }
    for (key @ (contract, device), row) in &installs {
        if paid.get(key).map_or(0, Vec::len) != 1 {
            out.push(violation(ViolationKind::InstalledUnpaid, *contract, Some(*device), row.installed_at));
        }
    }
    out
}
