use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use podnet::{replay, report, scenario, suite};
use podnet_core::sim::{self, NoObserver};

#[derive(Parser)]
#[command(name = "podnet", version, about = "Simulator for paid, verifiable update distribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full adversary catalogue.
    AttackSuite {
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-verify every invariant over a recorded run.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { scenario: path, seed, out } => {
            let mut s = scenario::load(&path)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let run = sim::run(&s, &mut NoObserver)?;
            let log = report::write_run(&run, &out)?;
            let m = &run.metrics;
            println!(
                "seed {}: {} installs on {} devices, {} payments ({} coins), refund {}, {} violations",
                s.seed, m.devices_updated, m.devices_total, m.payments.count, m.payments.total, m.refund, m.violations
            );
            println!("ledger {}", log.ledger_digest);
            Ok(run.violations.is_empty())
        }
        Command::AttackSuite { out } => {
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let results = suite::run_suite(Some(&out))?;
            for r in &results {
                let verdict = if r.passed { "pass" } else { "FAIL" };
                println!("{verdict} {:<22} {}", r.name, r.failures.join("; "));
            }
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Replay { log } => {
            let log = report::RunLog::load(&log)?;
            let rep = replay::replay(&log);
            for c in &rep.checks {
                println!("{} {:<20} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(rep.passed)
        }
    }
}
