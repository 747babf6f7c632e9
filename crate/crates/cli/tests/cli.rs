use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bessim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bessim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn outcome(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("outcome.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("uti");
    let o = bessim(&[
        "run",
        "--profile",
        "es3",
        "--attack",
        "uti",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--frames",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "events.jsonl",
        "metrics.csv",
        "voltages.csv",
        "sniffer.jsonl",
        "outcome.json",
        "frames.txt",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let v = outcome(&out);
    assert_eq!(v["attack"], "uti");
    assert_eq!(v["profile"], "es3");
    assert_eq!(v["success"], true);
    assert_eq!(v["metrics"]["mileageKm"], 433);

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("attack,profile,countermeasures,seed,duration_ms"));
    assert!(lines
        .next()
        .unwrap()
        .starts_with("uti,es3,none,3,70000,100,true,success"));

    let volts = fs::read_to_string(out.join("voltages.csv")).unwrap();
    assert_eq!(
        volts.lines().next().unwrap(),
        "t_ms,vc1,vc2,vc3,vc4,vc5,vc6,vc7,vc8,vc9,vc10,battlevel,sleeping,charging"
    );

    // The final summary event carries the outcome, so nothing shown is off the log.
    let events = fs::read_to_string(out.join("events.jsonl")).unwrap();
    let last: Value = serde_json::from_str(events.lines().last().unwrap()).unwrap();
    assert_eq!(last["detail"]["outcome"]["metrics"]["mileageKm"], 433);
    assert!(!tmp.path().read_dir().unwrap().any(|e| e
        .unwrap()
        .path()
        .extension()
        .is_some_and(|x| x == "partial")));
}

#[test]
fn identical_configs_give_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = bessim(&[
            "run",
            "--attack",
            "des3",
            "--countermeasures",
            "c4",
            "--seed",
            "21",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out.join("events.jsonl")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn ransomware_and_recovery_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ubr");
    let o = bessim(&[
        "run",
        "--profile",
        "m365",
        "--attack",
        "ubr",
        "--seed",
        "7",
        "--duration",
        "12600000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v = outcome(&out);
    assert_eq!(v["status"], "success");
    assert!(v["metrics"]["autonomyLossPct"].as_f64().unwrap() >= 50.0);
    assert_eq!(v["metrics"]["ransomUrl"], "t.ly/AaBbCc");

    let es3 = tmp.path().join("es3");
    assert!(bessim(&[
        "run",
        "--profile",
        "es3",
        "--attack",
        "ubr",
        "--out",
        es3.to_str().unwrap()
    ])
    .status
    .success());
    let v = outcome(&es3);
    assert_eq!(v["status"], "success-with-E24");
    assert!((v["metrics"]["autonomyLossPct"].as_f64().unwrap() - 10.0).abs() <= 3.0);

    let paid = tmp.path().join("paid");
    let o = bessim(&[
        "run",
        "--attack",
        "ubr",
        "--duration",
        "16000000",
        "--pay-at",
        "12600000",
        "--out",
        paid.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let events = fs::read_to_string(paid.join("events.jsonl")).unwrap();
    assert!(events.contains("\"phase\":\"recovered\""));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["run", "--attack", "des9"][..],
        &["run", "--profile", "vespa"],
        &["run", "--countermeasures", "c5"],
        &["run", "--pin", "12ab56"],
        &["run", "--duration", "0"],
        &["run", "--attack", "plr", "--pay-at", "5"],
        &["frobnicate"],
    ] {
        let o = bessim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn io_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = bessim(&[
        "run",
        "--attack",
        "none",
        "--duration",
        "1000",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = bessim(&["flash", tmp.path().join("missing.img").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn flash_follows_the_signing_policy() {
    let tmp = tempfile::tempdir().unwrap();
    let img = |args: &[&str], name: &str| {
        let p = tmp.path().join(name);
        let mut a = vec!["make-image"];
        a.extend_from_slice(args);
        a.extend_from_slice(&["--out", p.to_str().unwrap()]);
        assert!(bessim(&a).status.success());
        p
    };
    let flash = |p: &Path, cm: &str| -> Value {
        let o = bessim(&["flash", p.to_str().unwrap(), "--countermeasures", cm]);
        assert!(o.status.success());
        serde_json::from_slice(&o.stdout).unwrap()
    };
    let stock = img(&["--kind", "stock", "--encrypt"], "stock.img");
    let evil = img(
        &["--kind", "malicious", "--attack", "ubr", "--encrypt"],
        "evil.img",
    );
    assert_eq!(flash(&stock, "c1,c2")["accepted"], true);
    assert_eq!(flash(&evil, "c2")["reason"], "SignatureInvalid");
    assert_eq!(flash(&evil, "")["accepted"], true);

    let junk = tmp.path().join("junk.img");
    fs::write(&junk, b"not an image").unwrap();
    assert_eq!(
        bessim(&["flash", junk.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn matrix_is_a_function_of_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = bessim(&["matrix", "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let err = String::from_utf8_lossy(&o.stderr).into_owned();
        assert!(!err.contains("BROKEN"), "{err}");
        fs::read(out.join("matrix.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(
        String::from_utf8(a).unwrap().lines().count(),
        1 + 10 * 2 * 16
    );
}
