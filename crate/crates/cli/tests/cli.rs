use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_porous-frac"));
    c.env_remove("POROUS_FRAC_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn undamped_simulation_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--gamma", "0", "--t-end", "5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    let drift = m["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "energy_drift")
        .unwrap();
    assert_eq!(drift["passed"], true);
    let e = column(&std::fs::read_to_string(dir.path().join("energy.csv")).unwrap(), "E");
    assert!((e[e.len() - 1] - e[0]).abs() < 1e-10 * e[0]);
}

#[test]
fn spectrum_without_tempering_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--kappa", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("κ"), "{err}");
    assert_eq!(manifest(dir.path())["status"], "FAILED");
}

#[test]
fn kernel_check_meets_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["kernel-check"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("kernel_check.csv")).unwrap();
    let errs = column(&csv, "rel_err");
    assert_eq!(errs.len(), 9 * 3 * 5);
    assert!(errs.iter().all(|e| *e < 1e-6));
}

#[test]
fn flags_are_echoed_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--alpha", "0.75"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["config"]["params"]["alpha"], 0.75);
    assert_eq!(m["command"], "spectrum");
    assert!(m["files"].as_array().unwrap().iter().any(|f| f == "spectrum.csv"));
}

#[test]
fn alpha_outside_the_unit_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--alpha", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha must lie in (0,1)"));
}

#[test]
fn undamped_decay_fit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["decay-fit", "--gamma", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_lists_the_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[params]\nalhpa = 0.5\n").unwrap();
    let o = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alhpa") && err.contains("kappa"), "{err}");
}

#[test]
fn config_file_and_environment_set_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[params]\nalpha = 0.3\n[numerics]\nmodes = 4\nt_end = 1.0\nsnapshot_every = 50\n[output]\nplots = \"on\"\n",
    )
    .unwrap();
    let env_dir = dir.path().join("from_env");
    let o = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .env("POROUS_FRAC_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&env_dir);
    assert_eq!(m["config"]["params"]["alpha"], 0.3);
    assert_eq!(m["config"]["numerics"]["modes"], 4);
    assert!(env_dir.join("energy.svg").exists());
    let snaps = std::fs::read_to_string(env_dir.join("snapshots.csv")).unwrap();
    // t = 0, 0.5, 1 on 101 points
    assert_eq!(snaps.lines().count(), 1 + 3 * 101);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run(&["simulate", "--modes", "8", "--t-end", "2"], d.path()).status.success());
        assert!(run(&["resolvent", "--seed", "3"], d.path()).status.success());
    }
    for f in ["energy.csv", "resolvent.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let ra = manifest(a.path())["results"]["static"].clone();
    let rb = manifest(b.path())["results"]["static"].clone();
    assert_eq!(ra, rb);
}
