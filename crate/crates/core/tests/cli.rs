use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisy-tai"))
        .args(args)
        .env_remove("NOISY_TAI_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn capacity_prints_both_units() {
    let o = run(&["capacity", "bsc:0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("0.368064 nats / 0.531004 bits"));
}

#[test]
fn capacity_from_document() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("bsc.json");
    std::fs::write(&doc, r#"{"channel": [["0.9", "0.1"], ["0.1", "0.9"]]}"#).unwrap();
    let o = run(&["capacity", doc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("0.368064 nats"));
}

#[test]
fn zero_capacity_exponent_is_zero() {
    let o = run(&["exponent", "--capacity", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("theta (lagrangian): 0\n"));
}

#[test]
fn verify_demo_passes() {
    let o = run(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"channel": [["0.9", "0.2"]]}"#).unwrap();
    assert_eq!(run(&["capacity", bad.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["capacity", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["capacity", "bsc:0.1", "--tol", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["blowup", "--n", "64"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn failing_check_exits_three() {
    // the tuned rule's type-I error (about 0.25) exceeds epsilon
    let o = run(&["verify", "--epsilon", "0.05", "--gamma", "0.4"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("type_one_error,") && l.ends_with(",false")), "{csv}");
    assert_eq!(o.status.code(), Some(3), "{csv}");
}

#[test]
fn runs_are_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let args = ["simulate", "--n-list", "4,6", "--trials", "20000", "--seed", "7", "-q"];
    let mut first: Vec<&str> = args.to_vec();
    first.extend(["--out", a.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(run(&first).status.code(), Some(0));
    let mut second: Vec<&str> = args.to_vec();
    second.extend(["--out", b.to_str().unwrap(), "--threads", "4"]);
    assert_eq!(run(&second).status.code(), Some(0));
    assert_eq!(read(&a), read(&b));

    let cfg = dir.path().join("a.csv.config.json");
    assert_eq!(read(&cfg), read(&dir.path().join("b.csv.config.json")));
    let o = run(&["--replay", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read(&a), read(&c));
    assert_eq!(read(&cfg), read(&dir.path().join("c.csv.config.json")));
}

#[test]
fn bits_only_changes_the_display() {
    let nats = run(&["exponent", "--capacity", "0.3"]);
    let bits = run(&["--bits", "exponent", "--capacity", "0.3"]);
    assert_eq!(nats.stdout, bits.stdout);
    assert!(stderr(&bits).contains("bits"));
    assert!(!stderr(&nats).contains("bits"));
}

#[test]
fn region_and_blowup_are_deterministic() {
    for args in [
        vec!["region", "--c-grid", "0,0.2,0.4", "--restarts", "4"],
        vec!["blowup", "--n", "8", "--alphabet-size", "3", "--set", "random:0.05,11"],
    ] {
        let x = run(&args);
        let y = run(&args);
        assert_eq!(x.status.code(), Some(0), "{}", stderr(&x));
        assert_eq!(x.stdout, y.stdout);
        assert!(!x.stdout.is_empty());
    }
}
