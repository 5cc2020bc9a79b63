//! File formats, reports, replay verification and the attack-suite driver
//! for the `podnet-core` simulator. The `podnet` binary is a thin front end
//! over this library.

pub mod canonical;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod secrecy;
pub mod suite;
