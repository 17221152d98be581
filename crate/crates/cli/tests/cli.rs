use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn fiberheat(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiberheat"))
        .args(args)
        .current_dir(dir)
        .env_remove("FIBERHEAT_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn lists_every_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = fiberheat(&["list-experiments"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "annulus2d",
        "channel2d",
        "torus-integrable",
        "torus-perturbed",
        "diophantine-scan",
        "mde-demo",
        "noninteg-volume",
        "geometry-selftest",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn unsorted_eps_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"channel2d\"\n[sweep]\neps_list = [0.01, 0.1]\n");
    let out = fiberheat(&["validate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.eps_list"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"mde-demo\"\n[grid]\nn_r = 3\n");
    let out = fiberheat(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_r"));
}

#[test]
fn solver_failure_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "experiment = \"channel2d\"\n[grid]\nn_psi = 16\nn_theta = 16\n[solver]\nmax_iterations = 2\n",
    );
    let out = fiberheat(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
}

#[test]
fn manifest_hashes_match_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"mde-demo\"\noutput_dir = \"out\"\n");
    let out = fiberheat(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    let manifest: toml::Value = fs::read_to_string(root.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["experiment"].as_str(), Some("mde-demo"));
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"].as_str() == Some("summary.csv")));
    for f in files {
        let bytes = fs::read(root.join(f["name"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"].as_str(), Some(digest.as_str()));
    }
    assert!(root.join("solve_log.csv").exists());
}

#[test]
fn default_output_dir_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"mde-demo\"\n");
    let out = Command::new(env!("CARGO_BIN_EXE_fiberheat"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("FIBERHEAT_OUT", dir.path().join("runs"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("runs/mde-demo/summary.csv").exists());
}
