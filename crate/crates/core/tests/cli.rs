use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ntklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntklab")).args(args).env("NTKLAB_THREADS", "1").output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_SWEEP: &str = r#"{"vary": "n", "values": [10, 14, 20], "d": 5, "m": 16, "T": 40}"#;

#[test]
fn unknown_config_key_exits_2_with_failed_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"m": 8, "momentum": 0.9}"#);
    let out = tmp.path().join("run");
    let o = ntklab(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("momentum"));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("momentum"));
}

#[test]
fn sweep_is_byte_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL_SWEEP);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = ntklab(&["xor-sweep", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seeds", "0..3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_ntklab"))
        .args(["xor-sweep", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seeds", "0,1,2", "--threads", "2"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let csv_a = std::fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("sweep.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,d,d2_over_n,test_error,std,seeds"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    // Sorted by d²/n ascending, so n descending.
    assert!(rows[0].starts_with("20,5,"));
    assert!(rows[0].ends_with(",0;1;2"));
    assert_eq!(manifest(&a)["status"], "ok");
}

#[test]
fn sweep_needs_three_values_and_three_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", SMALL_SWEEP);
    let o = ntklab(&["xor-sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap(), "--seeds", "0,1"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(tmp.path(), "t.json", r#"{"vary": "n", "values": [10, 10, 12], "d": 5}"#);
    let o = ntklab(&["xor-sweep", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_with_zero_steps_writes_init_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.json", r#"{"m": 16, "d": 5, "T": 0, "probes": []}"#);
    let out = tmp.path().join("run");
    let o = ntklab(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let seed_dir = out.join("seed_0");
    assert!(seed_dir.join("init.ckpt").exists());
    assert!(!seed_dir.join("final.ckpt").exists());
    assert_eq!(manifest(&out)["status"], "ok");
}

#[test]
fn train_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.json", r#"{"m": 16, "d": 5, "T": 25, "probes": ["descent"]}"#);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = ntklab(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(out.join("seed_0").join("trajectory.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(String::from_utf8_lossy(&bytes[0]).starts_with("step,train_loss,dist_from_init,dist_from_ref,grad_norm\n"));
}

#[test]
fn margin_certifies_small_xor_and_refuses_flipped_duplicate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m.json", r#"{"d": 6, "m": 128, "dataset": {"kind": "xor", "n": 20}, "trend_dims": []}"#);
    let out = tmp.path().join("ok");
    let o = ntklab(&["margin", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert!(cert["gamma"].as_f64().unwrap() > 0.0);

    let cfg = write_config(
        tmp.path(),
        "f.json",
        r#"{"d": 6, "m": 32, "dataset": {"kind": "xor", "n": 8, "flip_duplicate": true}, "trend_dims": []}"#,
    );
    let out = tmp.path().join("flip");
    let o = ntklab(&["margin", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("gamma = 0"), "{}", stdout(&o));
    assert!(!out.join("w_star.ckpt").exists());
}

#[test]
fn probes_zero_radius_and_unknown_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "p.json", r#"{"m": 32, "L": 2, "d": 4, "n": 6, "R": 0.0}"#);
    let out = tmp.path().join("flip");
    let o = ntklab(&["probe", "flip", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("flip.json")).unwrap()).unwrap();
    assert_eq!(report["scalars"]["max_flips"].as_f64(), Some(0.0));
    assert_eq!(report["scalars"]["mean_flips"].as_f64(), Some(0.0));

    let out = tmp.path().join("nope");
    let o = ntklab(&["probe", "no-such-probe", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("init-norm") && err.contains("flip-sweep"), "{err}");
    assert_eq!(manifest(&out)["status"], "failed");
}

#[test]
fn gaussian_indicator_probe_is_near_half() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = ntklab(&["probe", "gaussian-indicator", "--out", out.to_str().unwrap(), "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn report_exit_codes_tables_and_clashes() {
    let o = ntklab(&["report"]);
    assert_eq!(o.status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let c1 = write_config(tmp.path(), "a.json", SMALL_SWEEP);
    let c2 = write_config(tmp.path(), "b.json", &SMALL_SWEEP.replace("\"T\": 40", "\"T\": 30"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (c, out) in [(&c1, &a), (&c2, &b)] {
        let o = ntklab(&["xor-sweep", "--config", c.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seeds", "0..3"]);
        assert_eq!(o.status.code(), Some(0));
    }
    std::fs::remove_file(a.join("sweep.csv")).unwrap();
    let o = ntklab(&["report", a.to_str().unwrap(), b.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("CLASH: manifests [0] and [1]"), "{text}");
    assert!(text.contains("missing artifact") && text.contains("sweep.csv"), "{text}");
    assert_eq!(text.matches("fit: error =").count(), 2, "{text}");
}

#[test]
fn help_documents_csv_schemas_and_exit_codes() {
    let o = ntklab(&["--help"]);
    let text = stdout(&o);
    for needle in ["trajectory.csv", "sweep.csv", "margin_trend.csv", "Exit status"] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
    let o = ntklab(&["train", "--help"]);
    let text = stdout(&o);
    for flag in ["--config", "--out", "--seeds", "--threads", "--plot", "--check", "NTKLAB_THREADS"] {
        assert!(text.contains(flag), "train --help lacks {flag}");
    }
}
