use std::path::Path;
use std::process::{Command, Output};

fn cpotts(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpotts"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn validate_preset_prints_every_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpotts(dir.path(), &["validate", "--preset", "wr"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["A1.pos", "A1.core", "A2", "A3", "A4.sign", "A4.int", "A5.scale", "A5.vol"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.contains("pass")), "{name} missing:\n{text}");
    }
    assert!(text.contains("n_star = 1"));
}

#[test]
fn validation_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    // r2 too large for the cell side
    let text = std::fs::read_to_string(configs().join("soft-three-colour.toml"))
        .unwrap()
        .replace("r2 = 0.1", "r2 = 0.3")
        .replace("radii = [0.1, 0.6]", "radii = [0.3, 0.6]");
    std::fs::write(&bad, text).unwrap();
    let out = cpotts(dir.path(), &["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["sample", "--no-such-flag"][..],
        &["frobnicate"][..],
        &["percolation", "--p-grid", "1.5"][..],
        &["sample", "--alpha", "0.7,0.7"][..],
        &["validate", "--preset", "wr", "--config", "x.toml"][..],
    ] {
        let out = cpotts(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = cpotts(dir.path(), &["sample", "--no-such-flag"]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("Usage"));
}

#[test]
fn verify_passes_on_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpotts(dir.path(), &["verify", "--report", "verify.json"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("50 of 50 instances pass"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["instances"].as_array().unwrap().len(), 50);
}

#[test]
fn sample_outputs_have_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("soft-three-colour.toml");
    let out = cpotts(
        dir.path(),
        &["sample", "--config", cfg.to_str().unwrap(), "--box-cells", "8", "--sweeps", "60", "--burn-in", "10", "--chains", "2", "--out", "s"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(dir.path().join("s.readouts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 100);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["counts"].as_array().unwrap().len(), 3);
    let n = first["n"].as_u64().unwrap();
    let total: u64 = first["counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(n, total);
    let mut rdr = csv::Reader::from_path(dir.path().join("s.summary.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["cell", "interior", "observable", "mean", "stderr", "tau_int"]);
    // 64 cells, three colours plus N_inf
    assert_eq!(rdr.records().count(), 64 * 4);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("s.manifest.json")).unwrap()).unwrap();
    assert!(m["params"].as_str().unwrap().contains("alpha"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn replay_ignores_later_config_edits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    std::fs::copy(configs().join("widom-rowlinson.toml"), &cfg).unwrap();
    let args = ["sample", "--config", "m.toml", "--box-cells", "7", "--sweeps", "50", "--burn-in", "5", "--seed", "9", "--out", "a"];
    assert_eq!(cpotts(dir.path(), &args).status.code(), Some(0));
    let text = std::fs::read_to_string(&cfg).unwrap().replace("activity = 2.0", "activity = 5.0");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(cpotts(dir.path(), &["replay", "a.manifest.json", "--out", "b"]).status.code(), Some(0));
    for suffix in ["readouts.jsonl", "summary.csv"] {
        let a = std::fs::read(dir.path().join(format!("a.{suffix}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

#[test]
fn experiment_summary_has_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpotts(
        dir.path(),
        &["experiment", "--z", "0.05,3", "--box-cells", "9", "--sweeps", "300", "--burn-in", "50", "--chains", "2", "--out", "e"],
    );
    assert_eq!(out.status.code(), Some(0));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("e.summary.json")).unwrap()).unwrap();
    assert!(s["verdict"].as_str().unwrap().contains("symmetry breaking"));
    let mut rdr = csv::Reader::from_path(dir.path().join("e.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["box", "z", "cell", "observable", "mean", "stderr", "tau_int"]);
    assert!(rdr.records().any(|r| r.unwrap()[3].ends_with(":excess")));
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sample", "--box-cells", "7", "--chains", "4", "--sweeps", "80", "--burn-in", "10", "--out", "t"];
    for (dir, threads) in [(a.path(), "1"), (b.path(), "3")] {
        let st = Command::new(env!("CARGO_BIN_EXE_cpotts"))
            .args(args)
            .current_dir(dir)
            .env("CPOTTS_THREADS", threads)
            .status()
            .unwrap();
        assert!(st.success());
    }
    for f in ["t.readouts.jsonl", "t.summary.csv", "t.manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
