//! The adversary catalogue run by `attack-suite`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use podnet_core::dsn::LinkModel;
use podnet_core::sim::{self, AdversarySpec, AdversaryStats, RunOutput, Scenario};
use serde::Serialize;

use crate::report;
use crate::secrecy::{Leak, SecrecyScanner};

/// How many successes an adversary is expected to achieve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    None,
    /// A documented limitation: the attack works, exactly this often.
    Exactly(u64),
}

#[derive(Clone, Debug)]
pub struct AttackCase {
    pub name: &'static str,
    pub scenario: Scenario,
    /// Adversary kind to the expected successes. Kinds not listed expect none.
    pub expect: BTreeMap<&'static str, Expect>,
    /// Minimum attempts per kind for the case to count as exercised.
    pub min_attempts: BTreeMap<&'static str, u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub name: &'static str,
    pub passed: bool,
    pub adversaries: BTreeMap<String, AdversaryStats>,
    pub devices_updated: u64,
    pub devices_total: u64,
    pub violations: u64,
    pub leaks: Vec<Leak>,
    pub witnesses: u64,
    pub failures: Vec<String>,
}

fn base(seed: u64) -> Scenario {
    Scenario {
        seed,
        distributors: 4,
        devices_per_vendor: 40,
        deposit: 4000,
        update_size: 512,
        ..Scenario::default()
    }
}

fn case(name: &'static str, scenario: Scenario, min: &[(&'static str, u64)]) -> AttackCase {
    AttackCase { name, scenario, expect: BTreeMap::new(), min_attempts: min.iter().copied().collect() }
}

pub fn catalogue() -> Vec<AttackCase> {
    let mut cases = vec![
        case(
            "front-running",
            Scenario {
                devices_per_vendor: 100,
                deposit: 10_000,
                adversaries: vec![AdversarySpec::EavesdropAndFrontRun { attackers: 1 }],
                ..base(101)
            },
            &[("eavesdrop-and-front-run", 200)],
        ),
        case(
            "double-claims",
            Scenario { distributors: 1, adversaries: vec![AdversarySpec::DoubleClaimer { count: 2 }], ..base(102) },
            &[("double-claimer", 40)],
        ),
        case(
            "vendor-impersonation",
            Scenario { adversaries: vec![AdversarySpec::VendorImpersonator { count: 2 }], ..base(103) },
            &[("vendor-impersonator", 4)],
        ),
        case(
            "expired-claims",
            Scenario { distributors: 1, adversaries: vec![AdversarySpec::LateClaimer { count: 2 }], ..base(104) },
            &[("late-claimer", 1)],
        ),
        case(
            "downgrade-pushes",
            Scenario { updates_per_vendor: 3, adversaries: vec![AdversarySpec::DowngradePusher], ..base(105) },
            &[("downgrade-pusher", 40)],
        ),
        case(
            "in-transit-tampering",
            Scenario { adversaries: vec![AdversarySpec::ByteTamper { p: 0.25 }], ..base(106) },
            &[("byte-tamper", 20)],
        ),
        case(
            "message-drops",
            Scenario {
                link: LinkModel { drop_probability: 0.05, ..LinkModel::default() },
                adversaries: vec![AdversarySpec::MessageDrop { p: 0.3, transactions: true }],
                ..base(107)
            },
            &[("message-drop", 20)],
        ),
        case(
            "self-dealing-device",
            Scenario { adversaries: vec![AdversarySpec::DeviceSelfDealer { devices: 3 }], ..base(108) },
            &[("device-self-dealer", 3)],
        ),
        case(
            "everything-at-once",
            Scenario {
                updates_per_vendor: 2,
                release_interval: 300,
                adversaries: vec![
                    AdversarySpec::EavesdropAndFrontRun { attackers: 2 },
                    AdversarySpec::MessageDrop { p: 0.15, transactions: true },
                    AdversarySpec::ByteTamper { p: 0.1 },
                    AdversarySpec::VendorImpersonator { count: 1 },
                    AdversarySpec::DoubleClaimer { count: 1 },
                    AdversarySpec::DowngradePusher,
                    AdversarySpec::LateClaimer { count: 1 },
                ],
                ..base(109)
            },
            &[("eavesdrop-and-front-run", 1)],
        ),
    ];
    for c in &mut cases {
        if c.name == "self-dealing-device" {
            c.expect.insert("device-self-dealer", Expect::Exactly(3));
        }
    }
    cases
}

pub fn run_case(case: &AttackCase) -> Result<(CaseResult, RunOutput)> {
    let mut scanner = SecrecyScanner::new();
    let out = sim::run(&case.scenario, &mut scanner)?;
    let mut failures = Vec::new();
    for (kind, stats) in &out.metrics.adversaries {
        let want = case.expect.get(kind.as_str()).copied().unwrap_or(Expect::None);
        let ok = match want {
            Expect::None => stats.successes == 0,
            Expect::Exactly(n) => stats.successes == n,
        };
        if !ok {
            failures.push(format!("{kind}: {} successes, expected {want:?}", stats.successes));
        }
    }
    for (kind, min) in &case.min_attempts {
        let got = out.metrics.adversaries.get(*kind).map_or(0, |s| s.attempts);
        if got < *min {
            failures.push(format!("{kind}: only {got} attempts, need {min}"));
        }
    }
    if !out.violations.is_empty() {
        failures.push(format!("{} invariant violations, first {:?}", out.violations.len(), out.violations[0]));
    }
    if !scanner.leaks.is_empty() {
        failures.push(format!("{} witness leaks", scanner.leaks.len()));
    }
    let result = CaseResult {
        name: case.name,
        passed: failures.is_empty(),
        adversaries: out.metrics.adversaries.clone(),
        devices_updated: out.metrics.devices_updated,
        devices_total: out.metrics.devices_total,
        violations: out.metrics.violations,
        leaks: scanner.leaks,
        witnesses: scanner.witnesses,
        failures,
    };
    Ok((result, out))
}

/// Runs the whole catalogue. With `out`, each case's artifacts go to
/// `out/<case>/` and the summary to `out/summary.json`.
pub fn run_suite(out: Option<&Path>) -> Result<Vec<CaseResult>> {
    let mut results = Vec::new();
    for case in catalogue() {
        let (result, run) = run_case(&case)?;
        if let Some(dir) = out {
            report::write_run(&run, &dir.join(case.name))?;
        }
        results.push(result);
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), crate::canonical::to_string(&results)?)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_is_valid_and_distinct() {
        let cases = catalogue();
        let names: std::collections::BTreeSet<_> = cases.iter().map(|c| c.name).collect();
        assert_eq!(names.len(), cases.len());
        for c in &cases {
            c.scenario.validate().unwrap();
            for kind in c.min_attempts.keys().chain(c.expect.keys()) {
                assert!(c.scenario.adversaries.iter().any(|a| a.kind() == *kind), "{}: {kind}", c.name);
            }
        }
    }

    #[test]
    fn unexpected_success_fails_the_case() {
        let mut case = catalogue().into_iter().find(|c| c.name == "self-dealing-device").unwrap();
        assert!(run_case(&case).unwrap().0.passed);
        case.expect.clear();
        let (r, _) = run_case(&case).unwrap();
        assert!(!r.passed);
        assert!(r.failures[0].starts_with("device-self-dealer"));
    }
}
