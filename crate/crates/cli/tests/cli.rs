use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dorl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dorl"))
        .args(args)
        .env_remove("DORL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.push(dir.join("aggregate.csv"));
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn presets_lists_every_setting() {
    let o = dorl(&["presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["setting-I", "setting-II", "setting-III", "setting-IV", "setting-V", "setting-VI", "regret"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name},"))), "{name} missing");
    }
    let json: serde_json::Value = serde_json::from_slice(&dorl(&["presets", "--format", "json"]).stdout).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 7);
}

#[test]
fn validate_gains_pass_and_fail() {
    let o = dorl(&["validate-gains", "--config", "setting-I", "--mode", "C1"]);
    assert!(o.status.success());
    assert!(stdout(&o).ends_with("\"C1\",true\n"));

    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&dorl(&["presets"]));
    assert!(text.contains("setting-I"));
    let cfg = dorl_config_text("setting-I").replace("exponent = 0.6", "exponent = 0.4");
    let path = dir.path().join("slow.toml");
    fs::write(&path, cfg).unwrap();
    let o = dorl(&["validate-gains", "--config", path.to_str().unwrap(), "--mode", "C1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

/// Renders a preset through a zero-horizon run, which writes `config.toml`.
fn dorl_config_text(name: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let o = dorl(&["run", "--config", name, "--horizon", "0", "--runs", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    fs::read_to_string(dir.path().join("config.toml")).unwrap()
}

#[test]
fn horizon_zero_gives_header_and_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dorl(&["run", "--config", "setting-I", "--seed", "42", "--horizon", "0", "--runs", "2", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for run in ["run-00000.csv", "run-00001.csv"] {
        let text = fs::read_to_string(dir.path().join("runs").join(run)).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0,"));
    }
    for f in ["manifest.json", "excitation.json", "config.toml", "aggregate.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = dorl(&[
            "run", "--config", "regret", "--seed", "7", "--horizon", "300", "--runs", "3", "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    let c = tempfile::tempdir().unwrap();
    dorl(&["run", "--config", "regret", "--seed", "8", "--horizon", "300", "--runs", "3", "--out", c.path().to_str().unwrap()]);
    assert_ne!(read_dir_sorted(a.path()), read_dir_sorted(c.path()));
}

#[test]
fn audit_reports_window_and_rho0() {
    let o = dorl(&["audit", "--config", "setting-I", "--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["excitation"]["h"], 2);
    assert_eq!(doc["rho0"], 5.0);
    assert_eq!(doc["excitation"]["lower_bound"]["rho0"], 5.0);
    assert_eq!(doc["excitation"]["jointly_connected"]["holds"], true);
    assert_eq!(doc["excitation"]["jointly_observable"]["holds"], true);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dorl"))
        .args(["run", "--config", "setting-II", "--horizon", "5", "--runs", "1"])
        .env("DORL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let cfg = dorl_config_text("setting-I").replace("[noise]\n", "[noise]\nloudness = 2.0\n");
    fs::write(&path, &cfg).unwrap();
    let o = dorl(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = cfg.lines().position(|l| l.starts_with("loudness")).unwrap() + 1;
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(err.contains("loudness"), "{err}");

    let o = dorl(&["run", "--config", "setting-I", "--runs", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let o = dorl(&["run"]);
    assert!(!o.status.success());
    let o = dorl(&["run", "--config", "setting-I", "--format", "xml"]);
    assert!(!o.status.success());
}
