use std::process::Command;

use euler_lab::expcli::{run, ExperimentConfig, OutputDir, Scenario};

const KEY_LEMMA: &str = "n0 = 1\nm = 2\nalpha = 0.6\nresolution = 8\ntargets = 12\ngrad_grid = 64\nseed = 3\n";

#[test]
fn repeated_runs_write_identical_csv() {
    let cfg = ExperimentConfig::from_toml_str(KEY_LEMMA).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run(Scenario::KeyLemma, &cfg, &OutputDir::create(d.path()).unwrap()).unwrap();
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("keylemma.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    let text = String::from_utf8(read(&dirs[0])).unwrap();
    assert!(text.starts_with("resolution,time,r,z,main_term"));
    assert_eq!(text.lines().count(), 1 + 2 * 12);
}

#[test]
fn summary_echoes_config_and_timings() {
    let cfg = ExperimentConfig::from_toml_str(KEY_LEMMA).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = euler_lab::expcli::scenarios::run_key_lemma(&cfg, &OutputDir::create(dir.path()).unwrap()).unwrap();
    assert!(out.levels.iter().all(|l| !l.degenerate));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "key-lemma");
    assert_eq!(summary["config"]["seed"], 3);
    assert!(summary["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn binary_reports_bad_input() {
    let exe = env!("CARGO_BIN_EXE_euler-lab");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, KEY_LEMMA).unwrap();
    let bad = Command::new(exe).args(["warp-drive", "--config"]).arg(&cfg).output().unwrap();
    assert!(!bad.status.success());
    std::fs::write(&cfg, format!("{KEY_LEMMA}colour = 1\n")).unwrap();
    let unknown = Command::new(exe).args(["key-lemma", "--config"]).arg(&cfg).output().unwrap();
    assert!(!unknown.status.success());
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("colour"));
}

#[test]
fn binary_runs_a_scenario() {
    let exe = env!("CARGO_BIN_EXE_euler-lab");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, KEY_LEMMA).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(exe)
        .args(["key-lemma", "--threads", "1", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["keylemma.csv", "norms.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
