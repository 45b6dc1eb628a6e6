use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cocycle-lab"))
}

const SPECTRUM: &str = r#"
experiment = "spectrum"
seed = 11

[base]
kind = "rotation"

[cocycle]
builtin = "diagonal"
params = [2.0, 0.5]

[numerics]
steps = 2000
"#;

#[test]
fn run_writes_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SPECTRUM).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        status.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    for f in [
        "spectrum.csv",
        "trajectory.csv",
        "manifest.json",
        "summary.json",
        "summary.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.contains("[PASS] finite-exponents"));
}

#[test]
fn seed_flag_overrides_config_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SPECTRUM).unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let s = bin()
            .args(["run", "--seed", "99", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(s.status.success());
        csvs.push(std::fs::read(out.join("trajectory.csv")).unwrap());
        let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(summary.contains("seed: 99"));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn bad_config_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SPECTRUM.replace("steps = 2000", "stepz = 2000")).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
}

#[test]
fn numerical_failure_exits_with_status_two() {
    // The shear is not hyperbolic, so the robustness experiment cannot build
    // a certificate.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("shear.toml");
    std::fs::write(
        &cfg,
        r#"
experiment = "robustness"
seed = 1

[base]
kind = "rotation"

[cocycle]
builtin = "shear"
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let s = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(2));
    let json = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(json.contains("\"error\""));
}
