use std::path::PathBuf;
use std::process::{Command, Output};

use rfidsim::band::IqStream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfidsim"))
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rfidsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
  "reader": "quin:2",
  "duration_s": 0.02,
  "tags": [ { "kind": "quin", "count": 4, "distance_m": 2.0 } ]
}"#;

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_csv_is_deterministic() {
    let cfg = scratch("small.json", SMALL);
    let a = ok(&bin().args(["run", cfg.to_str().unwrap(), "--format", "csv"]).output().unwrap());
    let b = ok(&bin().args(["run", cfg.to_str().unwrap(), "--format", "csv"]).output().unwrap());
    assert_eq!(a, b);
    let rows = rfidsim::harness::parse_csv(&a).unwrap();
    let rate = rows.iter().find(|r| r.0 == "read_rate_per_s" && r.1.is_none()).unwrap().2;
    assert!(rate > 0.0);
}

#[test]
fn run_text_and_event_log() {
    let cfg = scratch("text.json", SMALL);
    let events = cfg.with_file_name("events.csv");
    let text = ok(&bin()
        .args(["run", cfg.to_str().unwrap(), "--events", events.to_str().unwrap()])
        .output()
        .unwrap());
    assert!(text.contains("read rate"));
    assert!(text.contains("calibration"));
    let log = std::fs::read_to_string(events).unwrap();
    assert!(log.starts_with("time_s,band,kind,epc_hex,duplicate"));
    assert!(log.lines().any(|l| l.contains(",epc,")));
}

#[test]
fn sweep_emits_one_block_per_value() {
    let cfg = scratch("sweep.json", SMALL);
    let out = ok(&bin()
        .args(["sweep", cfg.to_str().unwrap(), "--param", "distance", "--values", "1,3"])
        .output()
        .unwrap());
    let totals: Vec<&str> = out.lines().filter(|l| l.contains(",read_rate_per_s,all,")).collect();
    assert_eq!(totals.len(), 2);
    assert!(totals[0].starts_with("1,") && totals[1].starts_with("3,"));
}

#[test]
fn dump_iq_writes_band_baseband() {
    let cfg = scratch("dump.json", SMALL);
    let out = cfg.with_file_name("b1.iqf");
    ok(&bin()
        .args(["dump-iq", cfg.to_str().unwrap(), "--band", "1", "--out", out.to_str().unwrap(), "--duration", "0.001"])
        .output()
        .unwrap());
    let iq = IqStream::read_iqf(std::fs::File::open(out).unwrap()).unwrap();
    assert_eq!(iq.len(), 6400);
    assert_eq!(iq.sample_rate_hz, 6.4e6);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let cfg = scratch("bad.json", r#"{"reader":"tdma","extra":1}"#);
    let o = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));

    let cfg = scratch("good.json", SMALL);
    let o = bin().args(["dump-iq", cfg.to_str().unwrap(), "--band", "7", "--out", "/dev/null"]).output().unwrap();
    assert!(!o.status.success());
    let o = bin().args(["sweep", cfg.to_str().unwrap(), "--param", "colour", "--values", "1"]).output().unwrap();
    assert!(!o.status.success());
}
