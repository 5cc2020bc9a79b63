//! Scenario files.
//!
//! A scenario is a JSON object whose fields all have defaults:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "vendors": 1,
//!   "distributors": 10,
//!   "devices_per_vendor": 1000,
//!   "deposit": 100000,
//!   "link": { "latency": 2, "bandwidth": 1048576, "drop_probability": 0.0 },
//!   "adversaries": [ { "kind": "eavesdrop-and-front-run", "attackers": 1 } ]
//! }
//! ```
//!
//! Unknown fields and unknown adversary kinds are errors.

use std::path::{Path, PathBuf};

pub use podnet_core::sim::{AdversarySpec, Scenario, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario does not match the schema")]
    Schema(#[from] serde_json::Error),
    #[error("invalid scenario")]
    Invalid(#[from] ScenarioError),
}

pub fn parse(text: &str) -> Result<Scenario, LoadError> {
    let s: Scenario = serde_json::from_str(text)?;
    s.validate()?;
    Ok(s)
}

pub fn load(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    parse(&text)
}
