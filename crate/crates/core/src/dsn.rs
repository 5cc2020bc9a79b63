//! Content-addressed storage network with trackerless provider discovery.
//!
//! The DHT is modeled as one deterministic provider registry: `provide`
//! stores bytes on a node and announces it, `lookup` lists announced
//! providers in registration order, and `fetch` computes when a whole-file
//! transfer over the link model would complete. Requesters must check the
//! bytes against the content id themselves ([`verify_content`]); the network
//! offers no integrity of its own, and nothing stops a node from announcing
//! content it does not hold.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest};

/// Shared immutable file contents.
pub type Blob = Arc<[u8]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl core::fmt::Display for NodeId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentId(pub Digest);

impl ContentId {
    pub fn of(bytes: &[u8]) -> Self {
        Self(hash(bytes))
    }
}

impl core::fmt::Display for ContentId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        self.0.fmt(f)
    }
}

pub fn verify_content(id: &ContentId, bytes: &[u8]) -> bool {
    ContentId::of(bytes) == *id
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    pub content: ContentId,
    pub provider: NodeId,
    pub registered_at: u64,
}

/// Point-to-point link parameters shared by every pair of nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    pub latency: u64,
    /// Bytes per tick; 0 means unlimited.
    pub bandwidth: u64,
    pub drop_probability: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { latency: 2, bandwidth: 1 << 20, drop_probability: 0.0 }
    }
}

impl LinkModel {
    /// Ticks from sending `size` bytes until the last byte arrives:
    /// latency plus `ceil(size / bandwidth)`.
    pub fn transfer_ticks(&self, size: usize) -> u64 {
        let serialization = match self.bandwidth {
            0 => 0,
            bw => (size as u64).div_ceil(bw),
        };
        self.latency + serialization
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("provider {0} has left the network")]
    ProviderDeparted(NodeId),
    #[error("provider {0} does not hold the content")]
    NotHeld(NodeId),
}

#[derive(Clone, Debug)]
pub struct Transfer {
    pub bytes: Blob,
    pub arrives_at: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Dsn {
    records: BTreeMap<ContentId, Vec<ProviderRecord>>,
    store: BTreeMap<(NodeId, ContentId), Blob>,
    departed: BTreeSet<NodeId>,
    link: LinkModel,
}

impl Dsn {
    pub fn new(link: LinkModel) -> Self {
        Self { link, ..Self::default() }
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    /// Stores `bytes` on `node` and announces it. Idempotent per (node, content).
    pub fn provide(&mut self, node: NodeId, bytes: Blob, now: u64) -> ContentId {
        let id = ContentId::of(&bytes);
        self.store.insert((node, id), bytes);
        self.announce(node, id, now);
        id
    }

    /// Registers `node` as a provider without storing anything. The registry
    /// cannot tell an honest announcement from a false one.
    pub fn announce(&mut self, node: NodeId, content: ContentId, now: u64) {
        let list = self.records.entry(content).or_default();
        if !list.iter().any(|r| r.provider == node) {
            list.push(ProviderRecord { content, provider: node, registered_at: now });
        }
    }

    /// Registered providers that have not departed, in registration order.
    pub fn lookup(&self, content: &ContentId) -> Vec<NodeId> {
        self.records
            .get(content)
            .into_iter()
            .flatten()
            .map(|r| r.provider)
            .filter(|n| !self.departed.contains(n))
            .collect()
    }

    pub fn records(&self, content: &ContentId) -> &[ProviderRecord] {
        self.records.get(content).map_or(&[], Vec::as_slice)
    }

    pub fn fetch(
        &self,
        _requester: NodeId,
        provider: NodeId,
        content: &ContentId,
        now: u64,
    ) -> Result<Transfer, FetchError> {
        if self.departed.contains(&provider) {
            return Err(FetchError::ProviderDeparted(provider));
        }
        let bytes = self.store.get(&(provider, *content)).ok_or(FetchError::NotHeld(provider))?;
        Ok(Transfer { bytes: bytes.clone(), arrives_at: now + self.link.transfer_ticks(bytes.len()) })
    }

    /// Withdraws `node`'s record and its stored copy. Unknown records are ignored.
    pub fn unprovide(&mut self, node: NodeId, content: &ContentId) {
        if let Some(list) = self.records.get_mut(content) {
            list.retain(|r| r.provider != node);
        }
        self.store.remove(&(node, *content));
    }

    pub fn depart(&mut self, node: NodeId) {
        self.departed.insert(node);
    }

    pub fn rejoin(&mut self, node: NodeId) {
        self.departed.remove(&node);
    }

    pub fn holds(&self, node: NodeId, content: &ContentId) -> bool {
        self.store.contains_key(&(node, *content))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(b: &[u8]) -> Blob {
        Arc::from(b)
    }

    #[test]
    fn content_addressing_and_idempotence() {
        let mut dsn = Dsn::new(LinkModel::default());
        let p = blob(b"package");
        let id = dsn.provide(NodeId(0), p.clone(), 0);
        assert_eq!(id, ContentId(hash(b"package")));
        dsn.provide(NodeId(0), p.clone(), 1);
        assert_eq!(dsn.records(&id).len(), 1);
        dsn.provide(NodeId(1), p, 2);
        assert_eq!(dsn.lookup(&id), [NodeId(0), NodeId(1)]);
        assert!(dsn.lookup(&ContentId(hash(b"unknown"))).is_empty());
    }

    #[test]
    fn seeding_then_withdrawal() {
        let mut dsn = Dsn::new(LinkModel::default());
        let p = blob(b"P");
        let id = dsn.provide(NodeId(0), p.clone(), 0);
        for n in 1..=3 {
            dsn.provide(NodeId(n), p.clone(), n as u64);
        }
        assert_eq!(dsn.lookup(&id).len(), 4);
        dsn.unprovide(NodeId(0), &id);
        assert_eq!(dsn.lookup(&id), [NodeId(1), NodeId(2), NodeId(3)]);
        dsn.unprovide(NodeId(9), &id);
        assert_eq!(dsn.lookup(&id).len(), 3);
    }

    #[test]
    fn transfer_timing() {
        let link = LinkModel { latency: 2, bandwidth: 1 << 20, drop_probability: 0.0 };
        assert_eq!(link.transfer_ticks(1 << 20), 3);
        assert_eq!(link.transfer_ticks((1 << 20) + 1), 4);
        assert_eq!(link.transfer_ticks(0), 2);
        let mut dsn = Dsn::new(link);
        let id = dsn.provide(NodeId(0), Arc::from(alloc::vec![7u8; 1 << 20]), 0);
        assert_eq!(dsn.fetch(NodeId(5), NodeId(0), &id, 10).unwrap().arrives_at, 13);
    }

    #[test]
    fn departed_provider_and_fallback() {
        let mut dsn = Dsn::new(LinkModel::default());
        let id = dsn.provide(NodeId(0), blob(b"U"), 0);
        dsn.provide(NodeId(1), blob(b"U"), 0);
        let providers = dsn.lookup(&id);
        dsn.depart(NodeId(0));
        let got = providers
            .iter()
            .find_map(|p| dsn.fetch(NodeId(7), *p, &id, 0).ok())
            .unwrap();
        assert!(verify_content(&id, &got.bytes));
        assert_eq!(dsn.fetch(NodeId(7), NodeId(0), &id, 0).unwrap_err(), FetchError::ProviderDeparted(NodeId(0)));
        assert_eq!(dsn.lookup(&id), [NodeId(1)]);
    }

    #[test]
    fn tampered_bytes_fail_verification() {
        let mut dsn = Dsn::new(LinkModel::default());
        let id = dsn.provide(NodeId(0), blob(b"update file"), 0);
        let mut bytes = dsn.fetch(NodeId(1), NodeId(0), &id, 0).unwrap().bytes.to_vec();
        bytes[3] ^= 0x01;
        assert!(!verify_content(&id, &bytes));
    }

    #[test]
    fn announce_without_content() {
        let mut dsn = Dsn::new(LinkModel::default());
        let id = ContentId(hash(b"U"));
        dsn.announce(NodeId(4), id, 0);
        assert_eq!(dsn.lookup(&id), [NodeId(4)]);
        assert_eq!(dsn.fetch(NodeId(1), NodeId(4), &id, 0).unwrap_err(), FetchError::NotHeld(NodeId(4)));
    }
}
