use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn podnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podnet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn keys_sorted(v: &Value) -> bool {
    match v {
        Value::Object(m) => {
            let keys: Vec<_> = m.keys().collect();
            keys.windows(2).all(|w| w[0] < w[1]) && m.values().all(keys_sorted)
        }
        Value::Array(a) => a.iter().all(keys_sorted),
        _ => true,
    }
}

const SMALL: &str = r#"{"seed": 3, "distributors": 2, "devices_per_vendor": 8, "deposit": 800,
  "adversaries": [{"kind": "eavesdrop-and-front-run"}, {"kind": "byte-tamper", "p": 0.1}]}"#;

#[test]
fn run_then_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = podnet(&["run", "--scenario", &scenario, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("seed 9:"));
    for f in ["metrics.json", "audit.json", "ledger.json", "runlog.json"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.ends_with('\n') && !text.trim_end().contains('\n'), "{f} is not compact");
        let v: Value = serde_json::from_str(&text).unwrap();
        assert!(keys_sorted(&v), "{f} keys unsorted");
    }
    let log: Value = serde_json::from_str(&fs::read_to_string(out.join("runlog.json")).unwrap()).unwrap();
    assert_eq!(log["scenario"]["seed"], 9);
    let digest = log["ledger_digest"].as_str().unwrap();
    assert!(digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));

    let o = podnet(&["replay", "--log", out.join("runlog.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("pass ")));
}

#[test]
fn same_seed_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let read = |name: &str| {
        let out = tmp.path().join(name);
        assert!(podnet(&["run", "--scenario", &scenario, "--out", out.to_str().unwrap()]).status.success());
        fs::read(out.join("runlog.json")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn replay_detects_a_doctored_log() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(podnet(&["run", "--scenario", &scenario, "--out", out.to_str().unwrap()]).status.success());
    let path = out.join("runlog.json");
    let mut log: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let amount = &mut log["audit"][0]["amount"];
    *amount = Value::from(amount.as_u64().unwrap() + 1);
    fs::write(&path, serde_json::to_string(&log).unwrap()).unwrap();
    let o = podnet(&["replay", "--log", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL audit-trail"));
}

#[test]
fn attack_suite_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = podnet(&["attack-suite", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    let cases = summary.as_array().unwrap();
    assert_eq!(cases.len(), stdout(&o).lines().count());
    assert!(cases.iter().all(|c| c["passed"] == true && c["leaks"].as_array().unwrap().is_empty()));
    assert!(tmp.path().join("front-running/runlog.json").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = podnet(&["run", "--scenario", "/nonexistent.json", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let scenario = write_scenario(tmp.path(), r#"{"block_interval": 0}"#);
    let o = podnet(&["run", "--scenario", &scenario, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid scenario"));
    let o = podnet(&["replay", "--log", &scenario]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!podnet(&["frobnicate"]).status.success());
}

#[test]
fn shipped_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        podnet::scenario::load(&entry.unwrap().path()).unwrap();
        n += 1;
    }
    assert!(n >= 3);
}
