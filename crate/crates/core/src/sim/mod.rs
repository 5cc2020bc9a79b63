//! Deterministic discrete-event simulation of a whole network: vendors,
//! distributors, devices and adversaries sharing one ledger and one DSN.
//!
//! Events run in `(tick, insertion order)` from a single seeded RNG, so a
//! scenario and its seed fully determine the run.

mod check;
mod engine;
mod metrics;
mod scenario;

pub use check::{conservation, fair_exchange, ExchangeRecord};
pub use engine::{run, NoObserver, Observer, RunOutput, BACKOFF};
pub use metrics::{
    AdversaryStats, AuditRow, ContractReport, KindStats, Metrics, Payments, TranscriptStats, Violation, ViolationKind,
};
pub use scenario::{AdversarySpec, Scenario, ScenarioError};
