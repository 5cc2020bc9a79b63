//! Run artifacts.
//!
//! `write_run` produces four files in the output directory:
//!
//! * `metrics.json`: the run's [`Metrics`].
//! * `audit.json`: one row per installed update.
//! * `ledger.json`: the final ledger snapshot.
//! * `runlog.json`: a [`RunLog`], everything `replay` needs.
//!
//! All are canonical JSON; digests and keys are lowercase hex.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use podnet_core::crypto::Digest;
use podnet_core::ledger::{Account, Block, Ledger};
use podnet_core::protocol::TranscriptEntry;
use podnet_core::sim::{AuditRow, Metrics, RunOutput, Scenario, Violation};
use serde::{Deserialize, Serialize};

use crate::canonical;

pub const RUNLOG_FORMAT: &str = "podnet-runlog/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub format: String,
    pub scenario: Scenario,
    pub genesis: Vec<Account>,
    pub blocks: Vec<Block>,
    pub transcript: Vec<TranscriptEntry>,
    pub audit: Vec<AuditRow>,
    pub violations: Vec<Violation>,
    pub metrics: Metrics,
    pub ledger_digest: Digest,
    pub transcript_digest: Digest,
}

pub fn ledger_digest(ledger: &Ledger) -> Digest {
    canonical::digest(&ledger.snapshot()).expect("snapshot serializes")
}

pub fn transcript_digest(transcript: &[TranscriptEntry]) -> Digest {
    canonical::digest(&transcript).expect("transcript serializes")
}

impl RunLog {
    pub fn from_output(out: &RunOutput) -> Self {
        Self {
            format: RUNLOG_FORMAT.into(),
            scenario: out.scenario.clone(),
            genesis: out.genesis.clone(),
            blocks: out.ledger.blocks().to_vec(),
            transcript: out.transcript.clone(),
            audit: out.audit.clone(),
            violations: out.violations.clone(),
            metrics: out.metrics.clone(),
            ledger_digest: ledger_digest(&out.ledger),
            transcript_digest: transcript_digest(&out.transcript),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let log: RunLog = serde_json::from_str(&text).with_context(|| format!("{} is not a run log", path.display()))?;
        anyhow::ensure!(log.format == RUNLOG_FORMAT, "unsupported run log format {:?}", log.format);
        Ok(log)
    }
}

fn write<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, canonical::to_string(value)?).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_run(out: &RunOutput, dir: &Path) -> Result<RunLog> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let log = RunLog::from_output(out);
    write(dir, "metrics.json", &out.metrics)?;
    write(dir, "audit.json", &out.audit)?;
    write(dir, "ledger.json", &out.ledger.snapshot())?;
    write(dir, "runlog.json", &log)?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use podnet_core::sim::{self, NoObserver};

    #[test]
    fn written_log_loads_back() {
        let s = Scenario { seed: 4, distributors: 1, devices_per_vendor: 3, deposit: 30, ..Scenario::default() };
        let out = sim::run(&s, &mut NoObserver).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let log = write_run(&out, dir.path()).unwrap();
        assert_eq!(RunLog::load(&dir.path().join("runlog.json")).unwrap(), log);
        assert_eq!(log.ledger_digest, ledger_digest(&out.ledger));
    }

    #[test]
    fn foreign_format_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario { seed: 4, distributors: 1, devices_per_vendor: 2, deposit: 2, ..Scenario::default() };
        let mut log = RunLog::from_output(&sim::run(&s, &mut NoObserver).unwrap());
        log.format = "something-else/9".into();
        let p = dir.path().join("log.json");
        fs::write(&p, canonical::to_string(&log).unwrap()).unwrap();
        assert!(RunLog::load(&p).is_err());
    }
}
