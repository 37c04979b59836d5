//! End-to-end runs of the `carnot-lab` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use carnot_lab::report::RunManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_carnot-lab"));
    c.env_remove(carnot_lab::cli::THREADS_ENV);
    c
}

fn run(args: &[&str], dir: &Path) -> i32 {
    bin().args(args).current_dir(dir).status().unwrap().code().unwrap()
}

const QUICK_GEOMETRY: &str = "\
preset = \"heisenberg-1\"
[geometry]
cases = 200
extra_presets = []
haar_samples = 20000
";

#[test]
fn empty_and_invalid_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.toml"), "").unwrap();
    fs::write(dir.path().join("typo.toml"), "seeed = 1\n").unwrap();
    assert_eq!(run(&["classify", "--config", "empty.toml"], dir.path()), 2);
    assert_eq!(run(&["classify", "--config", "typo.toml"], dir.path()), 2);
    assert_eq!(run(&["classify", "--config", "missing.toml"], dir.path()), 2);
    assert_eq!(run(&["classify"], dir.path()), 2);
    assert_eq!(run(&["no-such-command"], dir.path()), 2);
    fs::write(dir.path().join("ok.toml"), "seed = 1\n").unwrap();
    assert_eq!(run(&["classify", "--config", "ok.toml", "--preset", "nope"], dir.path()), 2);
}

#[test]
fn same_seed_gives_identical_checksums() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), QUICK_GEOMETRY).unwrap();
    let mut manifests = Vec::new();
    for out in ["a", "b"] {
        assert_eq!(
            run(&["verify-geometry", "--config", "c.toml", "--out", out, "--seed", "9"], dir.path()),
            0
        );
        assert_eq!(run(&["classify", "--config", "c.toml", "--out", out, "--seed", "9"], dir.path()), 0);
        manifests.push(RunManifest::read(&dir.path().join(out).join("manifest.json")).unwrap());
    }
    let files = |m: &RunManifest| {
        m.stages
            .iter()
            .flat_map(|s| s.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())))
            .collect::<Vec<_>>()
    };
    let (a, b) = (files(&manifests[0]), files(&manifests[1]));
    assert_eq!(a, b);
    assert!(a.iter().any(|(p, _)| p == "regimes.csv"));
    assert!(a.iter().any(|(p, _)| p == "haar.csv"));
    // Every listed file exists with the recorded checksum.
    for (p, sum) in &a {
        let path = dir.path().join("a").join(p);
        assert_eq!(&carnot_lab::report::sha256_file(&path).unwrap(), sum);
    }
    assert_eq!(manifests[0].config["geometry"]["cases"], 200);
    assert_eq!(manifests[0].config["cutoffs"]["radii"][2], 16.0);

    assert_eq!(
        run(&["verify-geometry", "--config", "c.toml", "--out", "c", "--seed", "10"], dir.path()),
        0
    );
    let other = RunManifest::read(&dir.path().join("c").join("manifest.json")).unwrap();
    assert_ne!(files(&other), files(&manifests[0])[..files(&other).len()].to_vec());
}

#[test]
fn failed_checks_give_a_failure_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{QUICK_GEOMETRY}fd_ratio = [10.0, 11.0]\n");
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    assert_eq!(run(&["verify-geometry", "--config", "c.toml", "--out", "o"], dir.path()), 1);
    let text = fs::read_to_string(dir.path().join("o/failures.json")).unwrap();
    let list: serde_json::Value = serde_json::from_str(&text).unwrap();
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["stage"], "verify-geometry");
    assert!(list[0]["message"].as_str().unwrap().contains("convergence ratio"));

    // A fit without sweep files fails with a record, not a crash.
    assert_eq!(run(&["fit", "--config", "c.toml", "--out", "f"], dir.path()), 1);
    let m = RunManifest::read(&dir.path().join("f/manifest.json")).unwrap();
    assert!(!m.passed());
    assert_eq!(m.stages[0].failures.len(), 2);
}

#[test]
fn sweep_then_fit_on_a_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "\
seed = 1
[[sweep]]
kind = \"parabolic\"
h = 0.5
horizontal = 5.0
vertical = 3.0
[fit]
refinement_tol = 0.2
";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let code = run(&["sweep", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(code == 0 || code == 1);
    let rows = carnot_lab::report::read_sweep_csv(&dir.path().join("o/parabolic_p1.3.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.blew_up));
    assert!(dir.path().join("o/parabolic_p1.3_data.grid").exists());

    run(&["fit", "--config", "c.toml", "--out", "o"], dir.path());
    let svg = fs::read_to_string(dir.path().join("o/parabolic_p1.3.svg")).unwrap();
    assert_eq!(svg.matches("class=\"ref\"").count(), 2);
    let m = RunManifest::read(&dir.path().join("o/manifest.json")).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["sweep", "fit"]);
}

#[test]
fn thread_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 1\n").unwrap();
    let threads = |args: &[&str], env: Option<&str>, out: &str| {
        let mut c = bin();
        c.args(["classify", "--config", "c.toml", "--out", out]).args(args).current_dir(dir.path());
        if let Some(v) = env {
            c.env(carnot_lab::cli::THREADS_ENV, v);
        }
        assert!(c.status().unwrap().success());
        RunManifest::read(&dir.path().join(out).join("manifest.json")).unwrap().threads
    };
    assert_eq!(threads(&[], Some("3"), "a"), 3);
    assert_eq!(threads(&["--threads", "2"], Some("3"), "b"), 2);
}
