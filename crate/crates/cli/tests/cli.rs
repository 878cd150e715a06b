use std::path::Path;
use std::process::{Command, Output};

fn hejoin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hejoin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hejoin(args);
    assert!(
        out.status.success(),
        "hejoin {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen(dir: &Path) -> (String, String, String) {
    let d = dir.to_str().unwrap();
    ok(&["gen", "--out", d, "--seed", "5", "--originals", "40", "--duplicates", "12"]);
    let p = |f: &str| dir.join(f).to_str().unwrap().to_string();
    (p("owner_0.csv"), p("owner_1.csv"), p("truth.csv"))
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_owner_files_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, truth) = gen(dir.path());
    let lines = |p: &str| std::fs::read_to_string(p).unwrap().lines().count();
    assert_eq!(lines(&a), 13);
    assert_eq!(lines(&b), 41);
    assert_eq!(lines(&truth), 13);
}

#[test]
fn heppjoin_output_equals_ppjoin_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, truth) = gen(dir.path());
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    ok(&["ppjoin", "--t", "0.5", &a, &b, "--truth", &truth, "--out", &p("pp.csv")]);
    ok(&[
        "heppjoin", "--t", "0.5", &a, &b, "--truth", &truth, "--out", &p("he.csv"), "--audit",
        "--transcript", &p("t.ndjson"), "--report", &p("report.json"),
    ]);
    assert_eq!(std::fs::read(p("pp.csv")).unwrap(), std::fs::read(p("he.csv")).unwrap());
    let r = report(dir.path());
    assert_eq!(r["audit_passed"], true);
    assert!(r["is_match_total"].as_u64().unwrap() > 0);
    let first = std::fs::read_to_string(p("t.ndjson")).unwrap();
    assert!(first.lines().next().unwrap().starts_with("{\"seq\":0,"));
}

#[test]
fn p4join_fingerprints_feed_the_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, _) = gen(dir.path());
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    ok(&[
        "p4join", "--t", "0.5", &a, &b, "--k", "3", "--l", "16384", "--fingerprints", &p("fp.csv"),
        "--out", &p("pairs.csv"),
    ]);

    let out = ok(&["attack", "enumerate", &p("fp.csv"), "--out", &p("enum.csv")]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exact recovery on 52 of 52"), "{stderr}");

    ok(&["attack", "sensitivity", &p("fp.csv"), "--out", &p("sens.csv")]);
    let sens = std::fs::read_to_string(p("sens.csv")).unwrap();
    assert!(sens.starts_with("position,dist,freq,S\n"));
    assert_eq!(sens.lines().count(), 16385);

    let texts: String = std::fs::read_to_string(&b)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.to_string() + "\n")
        .collect();
    std::fs::write(p("dict.txt"), texts).unwrap();
    ok(&["attack", "rainbow", &p("fp.csv"), "--dictionary", &p("dict.txt"), "--out", &p("rb.csv")]);
    let hits = std::fs::read_to_string(p("rb.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) != Some("0"))
        .count();
    assert!(hits >= 40, "{hits}");
}

#[test]
fn attacks_reject_wrong_keys() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, _) = gen(dir.path());
    let fp = dir.path().join("fp.csv").to_str().unwrap().to_string();
    ok(&["p4join", &a, &b, "--l", "512", "--fingerprints", &fp, "--out", "/dev/null"]);
    let out = hejoin(&["attack", "enumerate", &fp, "--key-f", "guess"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameter error"));
}

#[test]
fn bench_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let base = "t = 0.8\noriginals = 40\nduplicates = 10\ndeterministic = true\n";
    std::fs::write(p("he.toml"), format!("engine = \"heppjoin\"\n{base}")).unwrap();
    std::fs::write(p("full.toml"), format!("engine = \"hejaccard\"\n{base}")).unwrap();
    ok(&["bench", "--config", &p("he.toml"), "--config", &p("full.toml"), "--out", &p("r.jsonl"), "--parallel"]);
    let out = ok(&["compare", &p("r.jsonl")]);
    let cmp: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cmp["he_ppjoin_saves_queries"], true);
    assert_eq!(cmp["rows"].as_array().unwrap().len(), 2);

    let again = tempfile::tempdir().unwrap();
    let r2 = again.path().join("r.jsonl");
    ok(&["bench", "--config", &p("he.toml"), "--config", &p("full.toml"), "--out", r2.to_str().unwrap()]);
    assert_eq!(std::fs::read(p("r.jsonl")).unwrap(), std::fs::read(r2).unwrap());

    std::fs::write(p("one.jsonl"), std::fs::read_to_string(p("r.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    let out = hejoin(&["compare", &p("one.jsonl")]);
    assert!(!out.status.success());
}

#[test]
fn config_errors_are_reported_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "engine = \"heppjoin\"\nthreshold = 5\n").unwrap();
    let out = hejoin(&["bench", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold 5"));
}
