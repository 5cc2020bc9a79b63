//! Scans every payload for the witnesses `r` and `t`.

use std::collections::HashSet;

use podnet_core::crypto::{Digest, Nonce32};
use podnet_core::dsn::NodeId;
use podnet_core::sim::Observer;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Leak {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: String,
}

/// Observer that records every witness as it is created and checks each
/// later payload, at every byte offset, against all of them.
#[derive(Default, Debug)]
pub struct SecrecyScanner {
    secrets: HashSet<[u8; 32]>,
    pub witnesses: u64,
    pub messages: u64,
    pub bytes: u64,
    pub leaks: Vec<Leak>,
}

impl SecrecyScanner {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Observer for SecrecyScanner {
    fn message(&mut self, tick: u64, from: NodeId, to: NodeId, kind: &str, payload: &[u8]) {
        self.messages += 1;
        self.bytes += payload.len() as u64;
        let hits = payload.windows(32).filter(|w| self.secrets.contains(*w)).count();
        for _ in 0..hits {
            self.leaks.push(Leak { tick, from, to, kind: kind.into() });
        }
    }

    fn witness(&mut self, _tick: u64, r: &Digest, t: &Nonce32) {
        self.witnesses += 1;
        self.secrets.insert(r.0);
        self.secrets.insert(t.0);
    }
}
