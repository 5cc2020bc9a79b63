//! Re-verifies a recorded run from its run log alone.

use std::collections::{BTreeMap, BTreeSet};

use podnet_core::contract::KEY_REVEALED;
use podnet_core::crypto::PublicKey;
use podnet_core::ledger::{Address, ContractCall, Ledger, Payload, TxOutcome};
use podnet_core::sim::{self, NoObserver};
use serde::Serialize;

use crate::report::{ledger_digest, transcript_digest, RunLog};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, failures: Vec<String>, ok_detail: String) -> Check {
    match failures.first() {
        None => Check { name, passed: true, detail: ok_detail },
        Some(first) => Check { name, passed: false, detail: format!("{} failure(s), first: {first}", failures.len()) },
    }
}

/// Replays the recorded blocks, checks ledger-level invariants and the
/// audit trail against them, then re-executes the scenario to check that
/// the run is reproducible and fair.
pub fn replay(log: &RunLog) -> ReplayReport {
    let mut checks = Vec::new();
    let alloc: BTreeMap<Address, u64> = log.genesis.iter().map(|a| (a.address, a.balance)).collect();
    let ledger = match Ledger::replay(alloc, &log.blocks) {
        Ok(l) => l,
        Err(e) => {
            checks.push(Check { name: "ledger-replay", passed: false, detail: e.to_string() });
            return ReplayReport { passed: false, checks };
        }
    };
    let digest = ledger_digest(&ledger);
    checks.push(check(
        "ledger-replay",
        if digest == log.ledger_digest {
            vec![]
        } else {
            vec![format!("final state {digest} differs from recorded {}", log.ledger_digest)]
        },
        format!("{} blocks re-executed to {digest}", log.blocks.len()),
    ));

    let conservation: Vec<String> = sim::conservation(&ledger).iter().map(|v| format!("{v:?}")).collect();
    checks.push(check("conservation", conservation, format!("{} contracts balanced", ledger.contracts().len())));

    let mut paid: BTreeMap<(Address, PublicKey), Vec<(Address, u64)>> = BTreeMap::new();
    let mut late = Vec::new();
    for block in ledger.blocks() {
        for (tx, r) in block.transactions.iter().zip(&block.receipts) {
            if let (Payload::Call { contract, call: ContractCall::PublishProof(_) }, TxOutcome::Paid { device, to, amount }) =
                (&tx.payload, &r.outcome)
            {
                paid.entry((*contract, *device)).or_default().push((*to, *amount));
                if block.timestamp >= ledger.contract(contract).map_or(0, |c| c.expiration()) {
                    late.push(format!("{contract} paid for {device} at {}", block.timestamp));
                }
            }
        }
    }
    let doubles: Vec<String> =
        paid.iter().filter(|(_, v)| v.len() > 1).map(|((c, d), v)| format!("{c}/{d} paid {} times", v.len())).collect();
    checks.push(check("single-payment", doubles, format!("{} payments, all distinct", paid.len())));
    checks.push(check("no-late-payment", late, "every payment precedes its expiration".into()));

    let revealed: BTreeSet<(Address, Vec<u8>)> = ledger
        .events()
        .iter()
        .filter(|e| e.name == KEY_REVEALED)
        .map(|e| (e.contract, e.args[0].clone()))
        .collect();
    let mut audit_failures = Vec::new();
    let mut seen = BTreeSet::new();
    for row in &log.audit {
        let key = (row.contract, row.device);
        if !seen.insert(key) {
            audit_failures.push(format!("{}/{} installed twice", row.contract, row.device));
        }
        match paid.get(&key).map(Vec::as_slice) {
            Some([(to, amount)]) if *to == row.distributor && *amount == row.amount => {}
            _ => audit_failures.push(format!("{}/{} has no matching payment", row.contract, row.device)),
        }
        if !revealed.contains(&(row.contract, row.device.0.to_vec())) {
            audit_failures.push(format!("{}/{} has no key reveal", row.contract, row.device));
        }
        if ledger.contract(&row.contract).map(|c| *c.update_hash()) != Some(row.update_id) {
            audit_failures.push(format!("{}/{} installed a foreign update", row.contract, row.device));
        }
    }
    checks.push(check("audit-trail", audit_failures, format!("{} rows match the ledger", log.audit.len())));

    let recorded: Vec<String> = log.violations.iter().map(|v| format!("{v:?}")).collect();
    checks.push(check("recorded-violations", recorded, "none recorded".into()));

    match sim::run(&log.scenario, &mut NoObserver) {
        Err(e) => checks.push(Check { name: "re-execution", passed: false, detail: e.to_string() }),
        Ok(again) => {
            let mut diffs = Vec::new();
            if transcript_digest(&again.transcript) != log.transcript_digest {
                diffs.push("transcript differs".to_string());
            }
            if ledger_digest(&again.ledger) != log.ledger_digest {
                diffs.push("ledger differs".to_string());
            }
            if again.metrics != log.metrics {
                diffs.push("metrics differ".to_string());
            }
            checks.push(check("re-execution", diffs, format!("seed {} reproduces the run", log.scenario.seed)));
            let unfair: Vec<String> = sim::fair_exchange(&again.ledger, &again.exchanges, &again.audit)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect();
            checks.push(check("fair-exchange", unfair, format!("{} accepted offers checked", again.exchanges.len())));
        }
    }
    ReplayReport { passed: checks.iter().all(|c| c.passed), checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use podnet_core::sim::{AdversarySpec, Scenario};

    fn log() -> RunLog {
        let s = Scenario {
            seed: 11,
            distributors: 2,
            devices_per_vendor: 6,
            deposit: 600,
            adversaries: vec![AdversarySpec::DoubleClaimer { count: 1 }],
            ..Scenario::default()
        };
        RunLog::from_output(&sim::run(&s, &mut NoObserver).unwrap())
    }

    fn failed(report: &ReplayReport) -> Vec<&'static str> {
        report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    #[test]
    fn honest_log_passes_every_check() {
        let r = replay(&log());
        assert!(r.passed, "{:?}", r.checks);
        assert_eq!(r.checks.len(), 8);
    }

    #[test]
    fn doctored_digest_is_caught() {
        let mut l = log();
        l.ledger_digest.0[0] ^= 1;
        assert_eq!(failed(&replay(&l)), ["ledger-replay", "re-execution"]);
    }

    #[test]
    fn invented_install_is_caught() {
        let mut l = log();
        let mut row = l.audit[0].clone();
        row.device = l.audit[1].device;
        row.contract.0[5] ^= 1;
        l.audit.push(row);
        assert_eq!(failed(&replay(&l)), ["audit-trail"]);
    }

    #[test]
    fn broken_block_stops_replay() {
        let mut l = log();
        l.blocks[1].timestamp = 0;
        let r = replay(&l);
        assert!(!r.passed);
        assert_eq!(r.checks.len(), 1);
    }
}
