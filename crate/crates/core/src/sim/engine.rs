use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::check::{self, ExchangeRecord};
use super::metrics::{AdversaryStats, AuditRow, ContractReport, Metrics, Violation, ViolationKind};
use super::scenario::{AdversarySpec, Scenario, ScenarioError};
use crate::contract::{witness_for, BidTerms, KEY_REVEALED};
use crate::crypto::{
    hash, Digest, Instance, KeyPair, Nonce16, Nonce32, Proof, ProofSystem, PublicKey, SimulatedProofSystem, Trapdoor,
    VerifyingKey, Signature,
};
use crate::dsn::{Blob, ContentId, Dsn, NodeId};
use crate::ledger::{
    Account, Address, ContractCall, Ledger, Payload, Transaction, TxFailure, TxOutcome, BID_CREATED, FACTORY_ADDRESS,
};
use crate::protocol::{
    AbortReason, Device, Distributor, Message, Offer, RequestError, SessionId, TranscriptEntry, UpdatePackage, Vendor,
};

/// Ticks a device or distributor waits before retrying after a failure.
pub const BACKOFF: u64 = 5;

/// Hooks into a run for instrumentation that must not influence it.
pub trait Observer {
    /// Every point-to-point message and package transfer, as sent.
    fn message(&mut self, _tick: u64, _from: NodeId, _to: NodeId, _kind: &str, _payload: &[u8]) {}
    /// Every witness a distributor creates, before its offer leaves.
    fn witness(&mut self, _tick: u64, _r: &Digest, _t: &Nonce32) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub metrics: Metrics,
    pub audit: Vec<AuditRow>,
    pub transcript: Vec<TranscriptEntry>,
    pub genesis: Vec<Account>,
    pub ledger: Ledger,
    pub exchanges: Vec<ExchangeRecord>,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Vendor,
    Distributor(usize),
    Device(usize),
    Rogue(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Behavior {
    Honest,
    DoubleClaim,
    LateClaim,
    Colluding,
}

struct DistNode {
    inner: Distributor,
    behavior: Behavior,
}

struct DevNode {
    inner: Device,
    colluder: Option<NodeId>,
}

struct VendorNode {
    inner: Vendor,
    devices: Vec<usize>,
}

/// Material an impersonator prepared for one genuine bid.
struct Fake {
    u_id: Digest,
    own_vk: VerifyingKey,
    own_sig: Signature,
    trapdoor: Trapdoor,
    real_vk: VerifyingKey,
    real_sig: Signature,
}

enum RogueRole {
    FrontRunner,
    Impersonator { victim: usize, fakes: BTreeMap<Address, Fake>, sessions: BTreeMap<SessionId, Address> },
    Pusher,
}

struct Rogue {
    node: NodeId,
    keys: KeyPair,
    nonce: u64,
    role: RogueRole,
}

impl Rogue {
    fn sign(&mut self, payload: Payload) -> Transaction {
        self.nonce += 1;
        Transaction::signed(&self.keys, self.nonce - 1, payload)
    }
}

#[derive(Clone, Debug)]
enum Event {
    Release { vendor: usize, round: u32 },
    StopSeeding { vendor: usize, contract: Address },
    Withdraw { vendor: usize, contract: Address },
    Seal,
    Deliver { from: NodeId, to: NodeId, msg: Message },
    FetchPackage { dist: usize, contract: Address },
    PackageArrival { dist: usize, contract: Address, bytes: Blob },
    DevicePoll { device: usize },
    DeviceTimeout { device: usize, session: SessionId },
    Retransmit { device: usize, contract: Address },
    DistTimeout { dist: usize, session: SessionId },
    ClaimCheck { dist: usize, contract: Address, device: PublicKey },
    LateSubmit { dist: usize, contract: Address, device: PublicKey },
}

struct Scheduled {
    tick: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // BinaryHeap is a max-heap; earliest (tick, seq) must come out first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.tick, other.seq).cmp(&(self.tick, self.seq))
    }
}

const FRONT_RUN: &str = "eavesdrop-and-front-run";
const DROP: &str = "message-drop";
const TAMPER: &str = "byte-tamper";
const IMPERSONATE: &str = "vendor-impersonator";
const DOUBLE: &str = "double-claimer";
const DOWNGRADE: &str = "downgrade-pusher";
const SELF_DEAL: &str = "device-self-dealer";
const LATE: &str = "late-claimer";

struct World<'o> {
    sc: Scenario,
    rng: ChaCha20Rng,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    ledger: Ledger,
    dsn: Dsn,
    proofs: SimulatedProofSystem,
    nodes: Vec<Slot>,
    accounts: BTreeMap<Address, NodeId>,
    vendors: Vec<VendorNode>,
    dists: Vec<DistNode>,
    devices: Vec<DevNode>,
    rogues: Vec<Rogue>,
    device_by_key: BTreeMap<PublicKey, usize>,
    dist_by_key: BTreeMap<PublicKey, usize>,
    vendor_by_addr: BTreeMap<Address, usize>,
    announced: Vec<Address>,
    event_cursor: usize,
    seal_pending: bool,
    drop_p: f64,
    drop_tx: bool,
    tamper_p: f64,
    paid: BTreeMap<(Address, PublicKey), (Address, u64, u64)>,
    exchanges: Vec<ExchangeRecord>,
    exchange_index: BTreeMap<(Address, PublicKey), usize>,
    audit: Vec<AuditRow>,
    transcript: Vec<TranscriptEntry>,
    metrics: Metrics,
    violations: Vec<Violation>,
    observer: &'o mut dyn Observer,
}

/// Executes `scenario` to quiescence or `max_ticks`. Identical scenarios
/// (including the seed) produce identical outputs.
pub fn run(scenario: &Scenario, observer: &mut dyn Observer) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let mut w = World::build(scenario.clone(), observer);
    let genesis: Vec<Account> = w.ledger.accounts().collect();
    while let Some(next) = w.queue.pop() {
        if next.tick > w.sc.max_ticks {
            break;
        }
        w.now = next.tick;
        w.dispatch(next.event);
    }
    Ok(w.finish(genesis))
}

impl<'o> World<'o> {
    fn build(sc: Scenario, observer: &'o mut dyn Observer) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(sc.seed);
        let mut nodes = Vec::new();
        let mut accounts = BTreeMap::new();

        let mut vendors = Vec::new();
        for _ in 0..sc.vendors {
            let node = push_node(&mut nodes, Slot::Vendor);
            let vendor = Vendor::new(node, KeyPair::generate(&mut rng));
            accounts.insert(vendor.address(), node);
            vendors.push(VendorNode { inner: vendor, devices: Vec::new() });
        }
        let watched: Vec<PublicKey> = vendors.iter().map(|v| v.inner.public()).collect();
        let mut dists = Vec::new();
        let add_dist = |behavior: Behavior, nodes: &mut Vec<Slot>, rng: &mut ChaCha20Rng, dists: &mut Vec<DistNode>| {
            let node = push_node(nodes, Slot::Distributor(dists.len()));
            let mut d = Distributor::new(node, KeyPair::generate(rng));
            for v in &watched {
                d.watch(*v);
            }
            d.claim_by_index(sc.claim_by_index);
            dists.push(DistNode { inner: d, behavior });
            node
        };
        for _ in 0..sc.distributors {
            add_dist(Behavior::Honest, &mut nodes, &mut rng, &mut dists);
        }
        let mut devices = Vec::new();
        for vendor in vendors.iter_mut() {
            for _ in 0..sc.devices_per_vendor {
                let node = push_node(&mut nodes, Slot::Device(devices.len()));
                let dev = Device::new(node, KeyPair::generate(&mut rng), vendor.inner.public());
                vendor.inner.manufacture(dev.public());
                vendor.devices.push(devices.len());
                devices.push(DevNode { inner: dev, colluder: None });
            }
        }

        let mut rogues = Vec::new();
        let mut drop_p = 0.0;
        let mut drop_tx = false;
        let mut tamper_p = 0.0;
        let mut stats = BTreeMap::new();
        for adv in &sc.adversaries {
            stats.entry(adv.kind().to_string()).or_insert_with(AdversaryStats::default);
            let mut add_rogue = |role: RogueRole, nodes: &mut Vec<Slot>, rng: &mut ChaCha20Rng| {
                let node = push_node(nodes, Slot::Rogue(rogues.len()));
                rogues.push(Rogue { node, keys: KeyPair::generate(rng), nonce: 0, role });
            };
            match *adv {
                AdversarySpec::EavesdropAndFrontRun { attackers } => {
                    for _ in 0..attackers {
                        add_rogue(RogueRole::FrontRunner, &mut nodes, &mut rng);
                    }
                }
                AdversarySpec::MessageDrop { p, transactions } => {
                    drop_p = p;
                    drop_tx |= transactions;
                }
                AdversarySpec::ByteTamper { p } => tamper_p = p,
                AdversarySpec::VendorImpersonator { count } => {
                    for i in 0..count as usize {
                        let victim = i % vendors.len().max(1);
                        let role = RogueRole::Impersonator { victim, fakes: BTreeMap::new(), sessions: BTreeMap::new() };
                        add_rogue(role, &mut nodes, &mut rng);
                    }
                }
                AdversarySpec::DoubleClaimer { count } => {
                    for _ in 0..count {
                        add_dist(Behavior::DoubleClaim, &mut nodes, &mut rng, &mut dists);
                    }
                }
                AdversarySpec::LateClaimer { count } => {
                    for _ in 0..count {
                        add_dist(Behavior::LateClaim, &mut nodes, &mut rng, &mut dists);
                    }
                }
                AdversarySpec::DowngradePusher => add_rogue(RogueRole::Pusher, &mut nodes, &mut rng),
                AdversarySpec::DeviceSelfDealer { devices: k } => {
                    for v in &vendors {
                        for &d in v.devices.iter().take(k as usize) {
                            if devices[d].colluder.is_none() {
                                devices[d].colluder = Some(add_dist(Behavior::Colluding, &mut nodes, &mut rng, &mut dists));
                            }
                        }
                    }
                }
            }
        }
        for d in &dists {
            accounts.insert(d.inner.address(), d.inner.node);
        }
        for r in &rogues {
            accounts.insert(r.keys.public().into(), r.node);
        }

        let balance = sc.vendor_balance.unwrap_or(sc.deposit.saturating_mul(u64::from(sc.updates_per_vendor)));
        let ledger = Ledger::genesis(vendors.iter().map(|v| (v.inner.address(), balance)));
        let device_by_key = devices.iter().enumerate().map(|(i, d)| (d.inner.public(), i)).collect();
        let dist_by_key = dists.iter().enumerate().map(|(i, d)| (d.inner.public(), i)).collect();
        let vendor_by_addr = vendors.iter().enumerate().map(|(i, v)| (v.inner.address(), i)).collect();
        let metrics = Metrics {
            seed: sc.seed,
            devices_total: devices.len() as u64,
            adversaries: stats,
            ..Metrics::default()
        };
        let mut w = Self {
            dsn: Dsn::new(sc.link),
            sc,
            rng,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            ledger,
            proofs: SimulatedProofSystem::new(),
            nodes,
            accounts,
            vendors,
            dists,
            devices,
            rogues,
            device_by_key,
            dist_by_key,
            vendor_by_addr,
            announced: Vec::new(),
            event_cursor: 0,
            seal_pending: false,
            drop_p,
            drop_tx,
            tamper_p,
            paid: BTreeMap::new(),
            exchanges: Vec::new(),
            exchange_index: BTreeMap::new(),
            audit: Vec::new(),
            transcript: Vec::new(),
            metrics,
            violations: Vec::new(),
            observer,
        };
        for v in 0..w.vendors.len() {
            w.schedule(0, Event::Release { vendor: v, round: 0 });
        }
        w
    }

    fn schedule(&mut self, tick: u64, event: Event) {
        self.queue.push(Scheduled { tick, seq: self.seq, event });
        self.seq += 1;
    }

    fn after(&mut self, delay: u64, event: Event) {
        self.schedule(self.now + delay, event);
    }

    fn stat(&mut self, kind: &str) -> &mut AdversaryStats {
        self.metrics.adversaries.entry(kind.to_string()).or_default()
    }

    fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen_bool(p)
    }

    fn violate(&mut self, kind: ViolationKind, contract: Option<Address>, device: Option<PublicKey>) {
        self.violations.push(Violation { kind, contract, device, tick: self.now });
    }

    fn expiration(&self, contract: &Address) -> u64 {
        self.ledger.contract(contract).map_or(0, |c| c.expiration())
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Release { vendor, round } => self.release(vendor, round),
            Event::StopSeeding { vendor, contract } => {
                if let Some(rel) = self.vendors[vendor].inner.releases().iter().find(|r| r.contract == contract) {
                    self.vendors[vendor].inner.stop_seeding(&rel.clone(), &mut self.dsn);
                }
            }
            Event::Withdraw { vendor, contract } => self.withdraw(vendor, contract),
            Event::Seal => self.seal(),
            Event::Deliver { from, to, msg } => match self.nodes[to.0 as usize] {
                Slot::Device(i) => self.device_receive(i, from, msg),
                Slot::Distributor(i) => self.dist_receive(i, from, msg),
                Slot::Rogue(i) => self.rogue_receive(i, from, msg),
                Slot::Vendor => {}
            },
            Event::FetchPackage { dist, contract } => self.fetch_package(dist, contract),
            Event::PackageArrival { dist, contract, bytes } => {
                let d = &mut self.dists[dist].inner;
                if d.package(&contract).is_none()
                    && d.accept_package(&contract, &bytes, &self.ledger, &mut self.dsn, self.now).is_err()
                {
                    self.after(1, Event::FetchPackage { dist, contract });
                }
            }
            Event::DevicePoll { device } => self.device_poll(device),
            Event::DeviceTimeout { device, session } => {
                let dev = &mut self.devices[device].inner;
                if dev.sessions().get(&session).is_some_and(|s| !s.is_finished()) {
                    dev.abort_session(&session, AbortReason::PeerDisconnect);
                    *self.metrics.aborts.entry(AbortReason::PeerDisconnect).or_default() += 1;
                    self.after(BACKOFF, Event::DevicePoll { device });
                }
            }
            Event::Retransmit { device, contract } => {
                if self.now < self.expiration(&contract) {
                    if let Some((to, msg)) = self.devices[device].inner.retransmission(&contract) {
                        let from = self.devices[device].inner.node;
                        self.send(from, to, msg);
                        self.after(self.retransmit_interval(), Event::Retransmit { device, contract });
                    }
                }
            }
            Event::DistTimeout { dist, session } => {
                let d = &mut self.dists[dist].inner;
                if d.sessions().get(&session).is_some_and(|s| !s.is_finished()) {
                    d.abort_session(&session, AbortReason::PeerDisconnect);
                    *self.metrics.aborts.entry(AbortReason::PeerDisconnect).or_default() += 1;
                }
            }
            Event::ClaimCheck { dist, contract, device } => {
                let open = self.dists[dist].inner.claims().get(&(contract, device)).is_some_and(|c| !c.settled);
                if !open {
                    return;
                }
                if self.now >= self.expiration(&contract) {
                    self.dists[dist].inner.settle(contract, device);
                } else if let Some(tx) = self.dists[dist].inner.resubmit(contract, device, self.now) {
                    self.submit_claim(tx);
                    self.after(3 * self.sc.block_interval, Event::ClaimCheck { dist, contract, device });
                }
            }
            Event::LateSubmit { dist, contract, device } => {
                if let Some(tx) = self.dists[dist].inner.resubmit(contract, device, self.now) {
                    self.submit_claim(tx);
                }
            }
        }
    }

    fn retransmit_interval(&self) -> u64 {
        3 * self.sc.block_interval + 2 * self.sc.link.latency
    }

    // ---- transport ----

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message) {
        let bytes = msg.encode();
        self.log(from, to, msg.kind(), &bytes);
        let link_drop = self.sc.link.drop_probability;
        if self.chance(link_drop) {
            self.metrics.transcript.dropped += 1;
            return;
        }
        let p = self.drop_p;
        if self.chance(p) {
            self.metrics.transcript.dropped += 1;
            self.stat(DROP).attempts += 1;
            return;
        }
        let p = self.tamper_p;
        let msg = if self.chance(p) {
            self.metrics.transcript.tampered += 1;
            self.stat(TAMPER).attempts += 1;
            tamper(msg, &mut self.rng)
        } else {
            msg
        };
        let delay = self.sc.link.transfer_ticks(bytes.len());
        self.after(delay, Event::Deliver { from, to, msg });
    }

    fn log(&mut self, from: NodeId, to: NodeId, kind: &str, payload: &[u8]) {
        self.observer.message(self.now, from, to, kind, payload);
        let t = &mut self.metrics.transcript;
        t.messages += 1;
        t.bytes += payload.len() as u64;
        let k = t.by_kind.entry(kind.to_string()).or_default();
        k.count += 1;
        k.bytes += payload.len() as u64;
        self.transcript.push(TranscriptEntry::record(self.now, from, to, kind, payload));
    }

    fn submit(&mut self, tx: Transaction) {
        if self.drop_tx {
            let p = self.drop_p;
            if self.chance(p) {
                self.stat(DROP).attempts += 1;
                return;
            }
        }
        if self.ledger.submit(tx).is_ok() {
            self.ensure_seal();
        }
    }

    /// Lets every front-runner race the claim before it enters the pool.
    fn submit_claim(&mut self, tx: Transaction) {
        if let Payload::Call { contract, call: ContractCall::PublishProof(tuple) } = &tx.payload {
            for i in 0..self.rogues.len() {
                if !matches!(self.rogues[i].role, RogueRole::FrontRunner) {
                    continue;
                }
                let me = self.rogues[i].keys.public();
                let mut variants = Vec::new();
                // payee swapped, everything else verbatim
                let mut a = tuple.clone();
                a.distributor = me;
                variants.push(a);
                // payee swapped with a consistent r and s under the captured t
                let mut b = tuple.clone();
                b.distributor = me;
                b.r = witness_for(&me, &b.t);
                b.s = hash(b.r.as_bytes());
                variants.push(b);
                // fresh t of the attacker's own choosing
                let mut c = tuple.clone();
                c.distributor = me;
                c.t = Nonce32::random(&mut self.rng);
                c.r = witness_for(&me, &c.t);
                c.s = hash(c.r.as_bytes());
                variants.push(c);
                for v in variants {
                    let payload = Payload::Call { contract: *contract, call: ContractCall::PublishProof(v) };
                    let ftx = self.rogues[i].sign(payload);
                    self.stat(FRONT_RUN).attempts += 1;
                    self.submit(ftx);
                }
            }
        }
        self.submit(tx);
    }

    fn ensure_seal(&mut self) {
        if !self.seal_pending {
            self.seal_pending = true;
            let bi = self.sc.block_interval;
            self.schedule((self.now / bi + 1) * bi, Event::Seal);
        }
    }

    // ---- ledger ----

    fn seal(&mut self) {
        self.seal_pending = false;
        if self.ledger.pending().is_empty() {
            return;
        }
        self.ledger.seal_block(self.now).expect("seal ticks strictly increase");
        self.metrics.blocks += 1;
        let block = self.ledger.blocks().last().expect("just sealed");
        let (height, timestamp) = (block.height, block.timestamp);
        let effects: Vec<(PublicKey, Payload, TxOutcome)> =
            block.transactions.iter().zip(&block.receipts).map(|(t, r)| (t.sender, t.payload.clone(), r.outcome.clone())).collect();
        let mut touched = BTreeSet::new();
        for (sender, payload, outcome) in effects {
            let Payload::Call { contract, call } = payload else { continue };
            touched.insert(contract);
            match (call, outcome) {
                (ContractCall::PublishProof(_), TxOutcome::Paid { device, to, amount }) => {
                    self.metrics.payments.count += 1;
                    self.metrics.payments.total += amount;
                    *self.metrics.payments.per_distributor.entry(to).or_default() += amount;
                    if self.paid.insert((contract, device), (to, amount, height)).is_some() {
                        self.violate(ViolationKind::DoublePayment, Some(contract), Some(device));
                        self.stat(DOUBLE).successes += 1;
                    }
                    if timestamp >= self.expiration(&contract) {
                        self.violate(ViolationKind::PaidAfterExpiry, Some(contract), Some(device));
                        self.stat(LATE).successes += 1;
                    }
                    match self.accounts.get(&to).map(|n| self.nodes[n.0 as usize]) {
                        Some(Slot::Rogue(_)) => self.stat(FRONT_RUN).successes += 1,
                        Some(Slot::Distributor(d)) if self.dists[d].behavior == Behavior::Colluding => {
                            let node = self.dists[d].inner.node;
                            let own = self.device_by_key.get(&device).is_some_and(|&i| self.devices[i].colluder == Some(node));
                            if own {
                                self.stat(SELF_DEAL).successes += 1;
                            }
                        }
                        _ => {}
                    }
                    if let Some(&d) = self.dist_by_key.get(&sender) {
                        self.dists[d].inner.settle(contract, device);
                    }
                }
                (ContractCall::PublishProof(tuple), TxOutcome::Failed { failure: TxFailure::Claim(reason) }) => {
                    *self.metrics.rejected_claims.entry(reason).or_default() += 1;
                    if let Some(&d) = self.dist_by_key.get(&sender) {
                        let device = self.ledger.contract(&contract).and_then(|c| c.resolve(&tuple.device));
                        if let Some(device) = device {
                            self.dists[d].inner.settle(contract, device);
                        }
                    }
                }
                _ => {}
            }
        }
        for c in touched {
            if let Some(b) = self.ledger.contract(&c) {
                if b.deposit() != b.paid_out() + b.refunded() + b.balance() {
                    self.violate(ViolationKind::Conservation, Some(c), None);
                }
            }
        }
        if self.ledger.total_supply() != self.ledger.issuance() {
            self.violate(ViolationKind::Supply, None, None);
        }
        self.process_events();
    }

    fn process_events(&mut self) {
        let fresh: Vec<_> = self.ledger.events()[self.event_cursor..].to_vec();
        self.event_cursor = self.ledger.events().len();
        for e in fresh {
            if e.contract == FACTORY_ADDRESS && e.name == BID_CREATED {
                if let Some(addr) = Address::from_slice(&e.args[1]) {
                    self.on_new_contract(addr);
                }
            } else if e.name == KEY_REVEALED {
                let (Some(pk), Some(r)) = (PublicKey::from_slice(&e.args[0]), Digest::from_slice(&e.args[1])) else {
                    continue;
                };
                if let Some(&i) = self.device_by_key.get(&pk) {
                    self.on_key_revealed(i, e.contract, pk, r);
                }
            }
        }
    }

    fn on_new_contract(&mut self, addr: Address) {
        self.announced.push(addr);
        let bid = self.ledger.contract(&addr).expect("announced contract exists").clone();
        for d in 0..self.dists.len() {
            if self.dists[d].inner.wants(&addr, &self.ledger) {
                self.after(1, Event::FetchPackage { dist: d, contract: addr });
            }
        }
        let jitter = self.sc.poll_jitter;
        for pk in bid.devices() {
            if let Some(&i) = self.device_by_key.get(pk) {
                let delay = self.rng.gen_range(0..=jitter);
                self.after(delay, Event::DevicePoll { device: i });
            }
        }
        let Some(&vendor) = self.vendor_by_addr.get(bid.owner()) else {
            return;
        };
        // impersonators shadow every genuine bid of their victim
        for i in 0..self.rogues.len() {
            if !matches!(self.rogues[i].role, RogueRole::Impersonator { victim, .. } if victim == vendor) {
                continue;
            }
            let package = self.vendors[vendor]
                .inner
                .releases()
                .iter()
                .find(|r| r.contract == addr)
                .map(|r| r.package.clone())
                .expect("genuine bid has a release");
            self.impersonate(i, &bid, addr, &package);
        }
    }

    fn impersonate(&mut self, i: usize, bid: &crate::contract::BidContract, addr: Address, package: &UpdatePackage) {
        let node = self.rogues[i].node;
        // advertise the genuine update without holding it
        self.dsn.announce(node, ContentId(package.u_id), self.now);
        let (keys, trapdoor) = self.proofs.setup(package.u_id, &mut self.rng);
        let own_sig = self.rogues[i].keys.sign(&UpdatePackage::vendor_message(&package.u_id, &keys.verifying));
        let fake = Fake {
            u_id: package.u_id,
            own_vk: keys.verifying,
            own_sig,
            trapdoor,
            real_vk: package.verifying_key.clone(),
            real_sig: package.vendor_sig,
        };
        // and publish a bogus bid of its own for the same devices
        let mut junk = vec![0u8; self.sc.update_size as usize];
        self.rng.fill_bytes(&mut junk);
        let (bogus_keys, _) = self.proofs.setup(hash(&junk), &mut self.rng);
        let bogus = UpdatePackage::build(&self.rogues[i].keys, Arc::from(junk), &bogus_keys);
        let terms = BidTerms {
            expiration: bid.expiration(),
            update_hash: bogus.u_id,
            package_hash: bogus.p_id,
            devices: bid.devices().to_vec(),
        };
        self.dsn.provide(node, Arc::from(bogus.encode()), self.now);
        let tx = self.rogues[i].sign(Payload::Deploy { terms, deposit: 0 });
        self.stat(IMPERSONATE).attempts += 1;
        self.submit(tx);
        if let RogueRole::Impersonator { fakes, .. } = &mut self.rogues[i].role {
            fakes.insert(addr, fake);
        }
    }

    fn on_key_revealed(&mut self, i: usize, contract: Address, pk: PublicKey, r: Digest) {
        let before = self.devices[i].inner.installed_version();
        let Ok(inst) = self.devices[i].inner.on_key_revealed(&contract, &pk, &r, self.now) else {
            return;
        };
        let dev = &self.devices[i].inner;
        let node = dev.node;
        let firmware_ok = dev.firmware().is_some_and(|f| hash(f) == inst.update_id);
        if !firmware_ok {
            self.violate(ViolationKind::CorruptInstall, Some(contract), Some(pk));
            self.stat(TAMPER).successes += 1;
        }
        if inst.height <= before {
            self.violate(ViolationKind::Downgrade, Some(contract), Some(pk));
            self.stat(DOWNGRADE).successes += 1;
        }
        if !self.vendor_by_addr.contains_key(self.ledger.contract(&contract).expect("revealing contract").owner()) {
            self.stat(IMPERSONATE).successes += 1;
        }
        let (to, amount, height) = self.paid.get(&(contract, pk)).copied().unwrap_or((Address([0; 32]), 0, 0));
        let signed_at = self.exchange_index.get(&(contract, pk)).map_or(0, |&x| self.exchanges[x].signed_at);
        self.audit.push(AuditRow {
            contract,
            device: pk,
            device_node: node,
            update_id: inst.update_id,
            distributor: to,
            distributor_node: self.accounts.get(&to).copied(),
            signed_at,
            installed_at: self.now,
            block_height: height,
            amount,
        });
        self.metrics.devices_updated += 1;

        let older: Vec<Address> = self
            .announced
            .iter()
            .filter(|a| {
                self.ledger.contract(a).is_some_and(|b| b.owner() == &self.devices_vendor_addr(i) && b.deployed_height() < inst.height)
            })
            .copied()
            .collect();
        for p in 0..self.rogues.len() {
            if matches!(self.rogues[p].role, RogueRole::Pusher) {
                let from = self.rogues[p].node;
                for &old in &older {
                    self.stat(DOWNGRADE).attempts += 1;
                    self.send(from, node, Message::Announce { contract: old });
                }
            }
        }
        if self.devices[i].inner.choose_contract(&self.announced, &self.ledger, self.now).is_some() {
            self.after(1, Event::DevicePoll { device: i });
        }
    }

    fn devices_vendor_addr(&self, i: usize) -> Address {
        self.devices[i].inner.vendor().into()
    }

    // ---- vendors ----

    fn release(&mut self, vendor: usize, round: u32) {
        let mut update = vec![0u8; self.sc.update_size as usize];
        self.rng.fill_bytes(&mut update);
        let keys: Vec<PublicKey> = self.vendors[vendor].devices.iter().map(|&d| self.devices[d].inner.public()).collect();
        let result = self.vendors[vendor].inner.release_update(
            Arc::from(update),
            &keys,
            self.sc.deposit,
            self.sc.refund_window,
            self.now,
            &mut self.ledger,
            &mut self.dsn,
            &mut self.proofs,
            &mut self.rng,
        );
        if let Ok((rel, _trapdoor)) = result {
            self.ensure_seal();
            self.after(self.sc.seeding_window, Event::StopSeeding { vendor, contract: rel.contract });
            self.after(self.sc.refund_window, Event::Withdraw { vendor, contract: rel.contract });
        }
        if round + 1 < self.sc.updates_per_vendor {
            self.after(self.sc.release_interval, Event::Release { vendor, round: round + 1 });
        }
    }

    fn withdraw(&mut self, vendor: usize, contract: Address) {
        let retry = 3 * self.sc.block_interval;
        match self.ledger.contract(&contract) {
            None => {
                if self.vendors[vendor].inner.releases().iter().any(|r| r.contract == contract && self.now < r.terms.expiration + 10 * retry) {
                    self.after(self.sc.block_interval, Event::Withdraw { vendor, contract });
                }
            }
            Some(c) if c.balance() == 0 => {}
            Some(c) if self.now < c.expiration() => {
                let at = c.expiration();
                self.schedule(at, Event::Withdraw { vendor, contract });
            }
            Some(_) => {
                let tx = self.vendors[vendor].inner.withdraw_tx(contract);
                self.submit(tx);
                self.after(retry, Event::Withdraw { vendor, contract });
            }
        }
    }

    // ---- distributors ----

    fn fetch_package(&mut self, dist: usize, contract: Address) {
        let expiration = self.expiration(&contract);
        let me = self.dists[dist].inner.node;
        if self.dists[dist].inner.package(&contract).is_some() || self.now >= expiration {
            return;
        }
        let id = ContentId(*self.ledger.contract(&contract).expect("watched contract").package_hash());
        let providers: Vec<NodeId> = self.dsn.lookup(&id).into_iter().filter(|&n| n != me).collect();
        if providers.is_empty() {
            self.after(BACKOFF, Event::FetchPackage { dist, contract });
            return;
        }
        let from = providers[self.rng.gen_range(0..providers.len())];
        let Ok(transfer) = self.dsn.fetch(me, from, &id, self.now) else {
            self.after(1, Event::FetchPackage { dist, contract });
            return;
        };
        self.log(from, me, "package-transfer", &transfer.bytes);
        let p = self.drop_p.max(self.sc.link.drop_probability);
        if self.chance(p) {
            self.metrics.transcript.dropped += 1;
            let wait = transfer.arrives_at - self.now + BACKOFF;
            self.after(wait, Event::FetchPackage { dist, contract });
            return;
        }
        let mut bytes = transfer.bytes;
        let p = self.tamper_p;
        if self.chance(p) && !bytes.is_empty() {
            self.metrics.transcript.tampered += 1;
            self.stat(TAMPER).attempts += 1;
            let mut v = bytes.to_vec();
            let at = self.rng.gen_range(0..v.len());
            v[at] ^= 1 << self.rng.gen_range(0..8);
            bytes = Arc::from(v);
        }
        self.schedule(transfer.arrives_at, Event::PackageArrival { dist, contract, bytes });
    }

    fn dist_receive(&mut self, dist: usize, from: NodeId, msg: Message) {
        let me = self.dists[dist].inner.node;
        match msg {
            Message::UpdateRequest { session, contract, .. } => {
                let reply = self.dists[dist].inner.on_update_request(from, session, contract, &mut self.rng, self.now);
                if let Ok(ch) = reply {
                    self.send(me, from, ch);
                    self.after(2 * self.sc.session_timeout, Event::DistTimeout { dist, session });
                }
            }
            Message::ChallengeResponse { session, device, sig } => {
                let reply = self.dists[dist].inner.on_challenge_response(
                    session,
                    device,
                    &sig,
                    &self.ledger,
                    &mut self.proofs,
                    &mut self.rng,
                );
                match reply {
                    Ok(offer) => {
                        let s = &self.dists[dist].inner.sessions()[&session];
                        let (r, t) = (s.r.expect("offered"), s.t.expect("offered"));
                        self.observer.witness(self.now, &r, &t);
                        self.send(me, from, offer);
                    }
                    Err(AbortReason::OutOfOrder) => {}
                    Err(reason) => *self.metrics.aborts.entry(reason).or_default() += 1,
                }
            }
            Message::DeliveryReceipt { session, sig } => {
                match self.dists[dist].inner.on_delivery_receipt(session, &sig, &self.ledger, self.now) {
                    Ok(tx) => self.claim(dist, tx),
                    Err(AbortReason::BadReceipt) => *self.metrics.aborts.entry(AbortReason::BadReceipt).or_default() += 1,
                    Err(_) => {}
                }
            }
            _ => {}
        }
    }

    fn claim(&mut self, dist: usize, tx: Transaction) {
        let Payload::Call { contract, call: ContractCall::PublishProof(tuple) } = &tx.payload else {
            return;
        };
        let contract = *contract;
        let Some(device) = self.ledger.contract(&contract).and_then(|c| c.resolve(&tuple.device)) else {
            return;
        };
        let check = Event::ClaimCheck { dist, contract, device };
        match self.dists[dist].behavior {
            Behavior::Honest | Behavior::Colluding => {
                if self.dists[dist].behavior == Behavior::Colluding {
                    self.stat(SELF_DEAL).attempts += 1;
                }
                self.submit_claim(tx);
                self.after(3 * self.sc.block_interval, check);
            }
            Behavior::DoubleClaim => {
                self.submit_claim(tx.clone());
                // the verbatim copy dies at the pool, the re-signed one at the contract
                self.stat(DOUBLE).attempts += 2;
                let _ = self.ledger.submit(tx);
                if let Some(again) = self.dists[dist].inner.resubmit(contract, device, self.now) {
                    self.submit_claim(again);
                }
                self.after(3 * self.sc.block_interval, check);
            }
            Behavior::LateClaim => {
                self.stat(LATE).attempts += 1;
                let at = self.expiration(&contract).max(self.now);
                self.schedule(at, Event::LateSubmit { dist, contract, device });
            }
        }
    }

    // ---- devices ----

    fn device_poll(&mut self, device: usize) {
        let dev = &self.devices[device].inner;
        if dev.busy() {
            return;
        }
        let Some(contract) = dev.choose_contract(&self.announced, &self.ledger, self.now) else {
            return;
        };
        let (u_id, providers) = match dev.providers(&contract, &self.ledger, &self.dsn, self.now) {
            Ok(x) => x,
            Err(RequestError::NoProviders) => {
                self.after(BACKOFF, Event::DevicePoll { device });
                return;
            }
            Err(_) => return,
        };
        let provider = match self.devices[device].colluder {
            Some(c) if providers.contains(&c) => c,
            Some(_) => {
                self.after(BACKOFF, Event::DevicePoll { device });
                return;
            }
            None => providers[self.rng.gen_range(0..providers.len())],
        };
        let dev = &mut self.devices[device].inner;
        let from = dev.node;
        let msg = dev.open_session(contract, u_id, provider, self.now);
        let Some(session) = msg.session() else { unreachable!() };
        self.send(from, provider, msg);
        self.after(self.sc.session_timeout, Event::DeviceTimeout { device, session });
    }

    fn device_receive(&mut self, device: usize, from: NodeId, msg: Message) {
        let me = self.devices[device].inner.node;
        match msg {
            Message::Challenge { session, c } => {
                if let Ok(resp) = self.devices[device].inner.on_challenge(session, &c) {
                    self.send(me, from, resp);
                }
            }
            Message::Offer { session, offer } => {
                let dev = &mut self.devices[device].inner;
                match dev.on_offer(session, &offer, &self.ledger, &self.proofs) {
                    Ok(receipt) => {
                        let contract = dev.sessions()[&session].contract;
                        let pk = dev.public();
                        self.exchange_index.insert((contract, pk), self.exchanges.len());
                        let distributor = match self.nodes[from.0 as usize] {
                            Slot::Distributor(d) => Some(self.dists[d].inner.address()),
                            Slot::Rogue(r) => {
                                self.stat(IMPERSONATE).successes += 1;
                                Some(self.rogues[r].keys.public().into())
                            }
                            _ => None,
                        };
                        self.exchanges.push(ExchangeRecord {
                            contract,
                            device: pk,
                            distributor_node: from,
                            distributor,
                            s: offer.s,
                            ciphertext: offer.ciphertext,
                            signed_at: self.now,
                        });
                        self.send(me, from, receipt);
                        self.after(self.retransmit_interval(), Event::Retransmit { device, contract });
                    }
                    Err(AbortReason::OutOfOrder) => {}
                    Err(reason) => {
                        *self.metrics.aborts.entry(reason).or_default() += 1;
                        if reason != AbortReason::AlreadySigned {
                            self.after(BACKOFF, Event::DevicePoll { device });
                        }
                    }
                }
            }
            Message::Announce { contract } => match self.devices[device].inner.eligible(&contract, &self.ledger, self.now) {
                Err(RequestError::Downgrade { .. }) => self.metrics.downgrades_refused += 1,
                Ok(_) => self.after(1, Event::DevicePoll { device }),
                Err(_) => {}
            },
            _ => {}
        }
    }

    // ---- adversaries ----

    fn rogue_receive(&mut self, i: usize, from: NodeId, msg: Message) {
        let me = self.rogues[i].node;
        let size = self.sc.update_size as usize;
        let RogueRole::Impersonator { fakes, sessions, .. } = &mut self.rogues[i].role else {
            return;
        };
        match msg {
            Message::UpdateRequest { session, contract, .. } if fakes.contains_key(&contract) => {
                sessions.insert(session, contract);
                let c = Nonce16::random(&mut self.rng);
                self.send(me, from, Message::Challenge { session, c });
            }
            Message::ChallengeResponse { session, .. } => {
                let Some(contract) = sessions.remove(&session) else { return };
                let fake = &fakes[&contract];
                let mut junk = vec![0u8; size];
                self.rng.fill_bytes(&mut junk);
                let ciphertext: Blob = Arc::from(junk);
                let s = hash(Nonce32::random(&mut self.rng).as_bytes());
                // alternate between a self-signed setup and the vendor's genuine keys
                let offer = if self.rng.gen_bool(0.5) {
                    Offer {
                        proof: fake.trapdoor.forge(&ciphertext, &s),
                        ciphertext,
                        s,
                        verifying_key: fake.own_vk.clone(),
                        vendor_sig: fake.own_sig,
                    }
                } else {
                    let mut bytes = vec![0u8; 64];
                    self.rng.fill_bytes(&mut bytes);
                    Offer {
                        proof: Proof { bytes, instance: Instance::new(&ciphertext, &s, &fake.u_id) },
                        ciphertext,
                        s,
                        verifying_key: fake.real_vk.clone(),
                        vendor_sig: fake.real_sig,
                    }
                };
                self.stat(IMPERSONATE).attempts += 1;
                self.send(me, from, Message::Offer { session, offer });
            }
            _ => {}
        }
    }

    // ---- wrap-up ----

    fn finish(mut self, genesis: Vec<Account>) -> RunOutput {
        self.metrics.final_tick = self.now;
        let mut refund = 0;
        for block in self.ledger.blocks() {
            for r in &block.receipts {
                if let TxOutcome::Refunded { amount } = r.outcome {
                    refund += amount;
                }
            }
        }
        self.metrics.refund = refund;
        self.metrics.contracts = self
            .ledger
            .contracts()
            .iter()
            .map(|(a, c)| ContractReport {
                address: *a,
                owner: *c.owner(),
                genuine: self.vendor_by_addr.contains_key(c.owner()),
                deployed_height: c.deployed_height(),
                deployed_at: c.deployed_at(),
                expiration: c.expiration(),
                n: c.n(),
                num_updated: c.num_updated(),
                deposit: c.deposit(),
                paid_out: c.paid_out(),
                refunded: c.refunded(),
                balance: c.balance(),
            })
            .collect();

        // every device holds its vendor's newest genuine release
        let mut latest: BTreeMap<Address, (u64, Address)> = BTreeMap::new();
        for r in &self.metrics.contracts {
            if r.genuine {
                let e = latest.entry(r.owner).or_insert((r.deployed_height, r.address));
                if r.deployed_height > e.0 {
                    *e = (r.deployed_height, r.address);
                }
            }
        }
        let releases_done = latest.len() == self.vendors.len()
            && self.vendors.iter().all(|v| v.inner.releases().len() as u32 == self.sc.updates_per_vendor);
        let mut coverage = Some(0);
        for d in &self.devices {
            let want = latest.get(&d.inner.vendor().into()).map(|l| l.1);
            match (d.inner.installed(), want) {
                (Some(inst), Some(w)) if inst.contract == w => coverage = coverage.map(|c: u64| c.max(inst.tick)),
                _ => coverage = None,
            }
        }
        self.metrics.ticks_to_full_coverage = if releases_done && !self.devices.is_empty() { coverage } else { None };

        for d in &self.dists {
            for c in d.inner.packages().keys() {
                if !self.metrics.contracts.iter().any(|r| r.address == *c && r.genuine) {
                    self.metrics.adversaries.entry(IMPERSONATE.to_string()).or_default().successes += 1;
                }
            }
        }

        let mut violations = self.violations;
        let mut post = check::conservation(&self.ledger);
        post.extend(check::fair_exchange(&self.ledger, &self.exchanges, &self.audit));
        for v in post {
            if !violations.iter().any(|x| x.kind == v.kind && x.contract == v.contract && x.device == v.device) {
                violations.push(v);
            }
        }
        if self.drop_p > 0.0 {
            let n = violations.len() as u64;
            self.metrics.adversaries.entry(DROP.to_string()).or_default().successes += n;
        }
        self.metrics.violations = violations.len() as u64;
        RunOutput {
            scenario: self.sc,
            metrics: self.metrics,
            audit: self.audit,
            transcript: self.transcript,
            genesis,
            ledger: self.ledger,
            exchanges: self.exchanges,
            violations,
        }
    }
}

fn push_node(nodes: &mut Vec<Slot>, slot: Slot) -> NodeId {
    nodes.push(slot);
    NodeId(nodes.len() as u32 - 1)
}

/// Flips one bit in the message's first variable field.
fn tamper<R: RngCore>(msg: Message, rng: &mut R) -> Message {
    fn flip<R: RngCore>(bytes: &mut [u8], rng: &mut R) {
        if !bytes.is_empty() {
            let at = rng.gen_range(0..bytes.len());
            bytes[at] ^= 1 << rng.gen_range(0..8);
        }
    }
    match msg {
        Message::UpdateRequest { session, mut contract, update_id } => {
            flip(&mut contract.0, rng);
            Message::UpdateRequest { session, contract, update_id }
        }
        Message::Challenge { session, mut c } => {
            flip(&mut c.0, rng);
            Message::Challenge { session, c }
        }
        Message::ChallengeResponse { session, device, mut sig } => {
            flip(&mut sig.0, rng);
            Message::ChallengeResponse { session, device, sig }
        }
        Message::Offer { session, mut offer } => {
            if rng.gen_bool(0.5) && !offer.ciphertext.is_empty() {
                let mut ct = offer.ciphertext.to_vec();
                flip(&mut ct, rng);
                offer.ciphertext = Arc::from(ct);
            } else {
                flip(&mut offer.s.0, rng);
            }
            Message::Offer { session, offer }
        }
        Message::DeliveryReceipt { session, mut sig } => {
            flip(&mut sig.0, rng);
            Message::DeliveryReceipt { session, sig }
        }
        Message::Announce { mut contract } => {
            flip(&mut contract.0, rng);
            Message::Announce { contract }
        }
    }
}
