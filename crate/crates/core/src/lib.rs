//! Core of `podnet`: paid, verifiable distribution of IoT software updates.
//!
//! Vendors escrow coins in a bid contract that pays the first distributor to
//! present a proof-of-distribution for each listed device. Distributor and
//! device swap the update for that proof through a zero-knowledge contingent
//! payment: the device receives the update encrypted under a key `r` together
//! with a proof that `r` opens it, and `r` only becomes public when the
//! distributor redeems the device's signature on-ledger.
//!
//! Everything here is deterministic and allocation-only (`no_std` + `alloc`):
//!
//! - [`crypto`]: hash, signatures, the update cipher, and the pluggable proof system.
//! - [`ledger`]: an in-memory permissionless ledger hosting contracts and events.
//! - [`contract`]: the proof-of-distribution bid escrow.
//! - [`dsn`]: content-addressed storage with a provider registry.
//! - [`protocol`]: vendor, distributor and device state machines.
//! - [`sim`]: the discrete-event scheduler, adversaries and metrics.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[macro_use]
mod bytes;

pub mod codec;
pub mod contract;
pub mod crypto;
pub mod dsn;
pub mod ledger;
pub mod protocol;
pub mod sim;

pub use bytes::HexError;
