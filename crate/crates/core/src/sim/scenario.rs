use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dsn::LinkModel;

/// Run configuration. Every field has a default, so a scenario file only
/// lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub vendors: u32,
    pub distributors: u32,
    pub devices_per_vendor: u32,
    /// Bytes per update file.
    pub update_size: u64,
    pub updates_per_vendor: u32,
    /// Ticks between a vendor's consecutive releases.
    pub release_interval: u64,
    pub deposit: u64,
    /// Genesis balance of each vendor; `deposit * updates_per_vendor` if absent.
    pub vendor_balance: Option<u64>,
    pub refund_window: u64,
    /// Ticks the vendor keeps providing the package after release.
    pub seeding_window: u64,
    pub block_interval: u64,
    /// Devices first poll a new contract uniformly within this many ticks.
    pub poll_jitter: u64,
    pub session_timeout: u64,
    /// Distributors name devices by bid index in their claims.
    pub claim_by_index: bool,
    pub link: LinkModel,
    pub adversaries: Vec<AdversarySpec>,
    pub max_ticks: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            vendors: 1,
            distributors: 3,
            devices_per_vendor: 10,
            update_size: 1024,
            updates_per_vendor: 1,
            release_interval: 500,
            deposit: 1000,
            vendor_balance: None,
            refund_window: 2000,
            seeding_window: 200,
            block_interval: 10,
            poll_jitter: 50,
            session_timeout: 40,
            claim_by_index: false,
            link: LinkModel::default(),
            adversaries: Vec::new(),
            max_ticks: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    /// Watches pending claims and races them with rewritten tuples.
    EavesdropAndFrontRun {
        #[serde(default = "one")]
        attackers: u32,
    },
    /// Drops point-to-point messages and package transfers, and optionally
    /// pending transactions, each with probability `p`.
    MessageDrop {
        p: f64,
        #[serde(default)]
        transactions: bool,
    },
    /// Flips one byte of a message or package transfer with probability `p`.
    ByteTamper { p: f64 },
    /// Deploys bogus bids for other vendors' devices and serves fake offers
    /// for genuine updates.
    VendorImpersonator {
        #[serde(default = "one")]
        count: u32,
    },
    /// Distributors that submit every claim twice.
    DoubleClaimer {
        #[serde(default = "one")]
        count: u32,
    },
    /// Points freshly updated devices at their vendor's older bids.
    DowngradePusher,
    /// Compromised devices that only exchange with their own distributor.
    DeviceSelfDealer {
        #[serde(default = "one")]
        devices: u32,
    },
    /// Distributors that hold every claim until the bid expires.
    LateClaimer {
        #[serde(default = "one")]
        count: u32,
    },
}

fn one() -> u32 {
    1
}

impl AdversarySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AdversarySpec::EavesdropAndFrontRun { .. } => "eavesdrop-and-front-run",
            AdversarySpec::MessageDrop { .. } => "message-drop",
            AdversarySpec::ByteTamper { .. } => "byte-tamper",
            AdversarySpec::VendorImpersonator { .. } => "vendor-impersonator",
            AdversarySpec::DoubleClaimer { .. } => "double-claimer",
            AdversarySpec::DowngradePusher => "downgrade-pusher",
            AdversarySpec::DeviceSelfDealer { .. } => "device-self-dealer",
            AdversarySpec::LateClaimer { .. } => "late-claimer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("block_interval must be at least 1")]
    ZeroBlockInterval,
    #[error("update_size must be at least 1")]
    EmptyUpdate,
    #[error("{field} = {value} is not a probability")]
    Probability { field: String, value: f64 },
    #[error("node census exceeds the 32-bit node id space")]
    TooManyNodes,
    #[error("{0} needs at least one device per vendor")]
    NeedsDevices(&'static str),
    #[error("downgrade-pusher needs at least two updates per vendor")]
    NeedsTwoUpdates,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.block_interval == 0 {
            return Err(ScenarioError::ZeroBlockInterval);
        }
        if self.update_size == 0 {
            return Err(ScenarioError::EmptyUpdate);
        }
        let prob = |field: &str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ScenarioError::Probability { field: field.into(), value })
            }
        };
        prob("link.drop_probability", self.link.drop_probability)?;
        let mut extra: u64 = 0;
        for a in &self.adversaries {
            match *a {
                AdversarySpec::MessageDrop { p, .. } => prob("message-drop.p", p)?,
                AdversarySpec::ByteTamper { p } => prob("byte-tamper.p", p)?,
                AdversarySpec::DeviceSelfDealer { devices } => {
                    if devices > self.devices_per_vendor {
                        return Err(ScenarioError::NeedsDevices("device-self-dealer"));
                    }
                    extra += u64::from(devices);
                }
                AdversarySpec::DowngradePusher if self.updates_per_vendor < 2 => {
                    return Err(ScenarioError::NeedsTwoUpdates)
                }
                AdversarySpec::EavesdropAndFrontRun { attackers: n }
                | AdversarySpec::VendorImpersonator { count: n }
                | AdversarySpec::DoubleClaimer { count: n }
                | AdversarySpec::LateClaimer { count: n } => extra += u64::from(n),
                _ => extra += 1,
            }
        }
        let nodes = u64::from(self.vendors)
            + u64::from(self.distributors)
            + u64::from(self.vendors) * u64::from(self.devices_per_vendor)
            + extra;
        if nodes > u64::from(u32::MAX) {
            return Err(ScenarioError::TooManyNodes);
        }
        Ok(())
    }
}
