use std::path::Path;
use std::process::{Command, Output};

fn lillab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lillab"));
    cmd.args(args).env_remove("LILLAB_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn without_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.contains("\"generated_at_unix\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn ou_mixing_defaults_exit_zero_with_unit_ratios() {
    let out = lillab(&["certify-mixing"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "certify-mixing");
    assert_eq!(v["passed"], true);
    assert!(v["config"]["model"]["kind"] == "ou" && v["version"].is_string());
    for p in v["report"]["grid"].as_array().unwrap() {
        assert!((p["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lil_with_zero_observable_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.json", r#"{"observable":{"kind":"zero"}}"#);
    let out = lillab(&["lil", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("degenerate variance"));
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "chain.json",
        r#"{"model":{"kind":"ctmc","q":[[-1,1],[1,-1]]},"clt":{"n_paths":2000,"t_eval":20}}"#,
    );
    let a = lillab(&["clt-proxy", "--config", &cfg, "--seed", "11", "--threads", "1"], &[]);
    let b = lillab(&["clt-proxy", "--config", &cfg, "--seed", "11", "--threads", "3"], &[]);
    assert!(a.status.success() && b.status.success());
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    let c = lillab(&["clt-proxy", "--config", &cfg, "--seed", "12"], &[]);
    assert_ne!(without_timestamp(&a), without_timestamp(&String::from_utf8(c.stdout).unwrap()));
}

#[test]
fn seed_precedence_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", r#"{"seed":3}"#);
    let seed_of = |out: Output| -> u64 {
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(lillab(&["certify-mixing", "--config", &cfg], &[])), 3);
    assert_eq!(seed_of(lillab(&["certify-mixing", "--config", &cfg], &[("LILLAB_SEED", "7")])), 7);
    assert_eq!(seed_of(lillab(&["certify-mixing", "--config", &cfg, "--seed", "9"], &[("LILLAB_SEED", "7")])), 9);
    let bad = lillab(&["certify-mixing"], &[("LILLAB_SEED", "x")]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn bad_config_and_unknown_command_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"mixing":{"t_grid":[2,1]},"lil":{"delta":0}}"#);
    let out = lillab(&["certify-mixing", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("mixing.t_grid") && err.contains("lil.delta"), "{err}");

    let out = lillab(&["certify-everything"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("Usage"));

    let broken = write_config(dir.path(), "broken.json", "{not json");
    assert_eq!(lillab(&["corrector", "--config", &broken], &[]).status.code(), Some(1));
}

#[test]
fn out_dir_receives_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"model":{"kind":"ctmc","q":[[-2,1,1],[1,-2,1],[1,1,-2]]},"observable":{"kind":"table","values":[1,0,-1]}}"#);
    let out_dir = dir.path().join("out");
    let out = lillab(&["corrector", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--format", "csv"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("corrector.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("state,chi"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("corrector.json")).unwrap()).unwrap();
    // χ = g/3 solves Qχ = −g for this generator.
    let chi: Vec<f64> = json["report"]["chi"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (c, g) in chi.iter().zip([1.0, 0.0, -1.0]) {
        assert!((c - g / 3.0).abs() < 1e-14);
    }
}
