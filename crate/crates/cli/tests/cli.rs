use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slowfast_cli::config::{parse_with_overrides, ExperimentConfig};
use slowfast_cli::output::sha256_hex;

const QUICK: [&str; 4] = ["--set", "integrator.paths=3", "--set", "integrator.T=0.5"];

fn slowfast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowfast")).args(args).output().expect("binary runs")
}

fn run_in(sub: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    slowfast(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn default_config_round_trips() {
    let out = slowfast(&["default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = parse_with_overrides(&text, &[]).unwrap();
    assert_eq!(cfg.to_toml(), text);
    assert_eq!(cfg.to_toml(), ExperimentConfig::default().to_toml());
}

#[test]
fn overrides_reach_nested_fields() {
    let cfg = parse_with_overrides(
        "",
        &["integrator.epsilon=0.002".into(), "sweep.eps_grid=[0.1, 0.05]".into(), "skeleton.target=\"sine\"".into()],
    )
    .unwrap();
    assert_eq!(cfg.integrator.epsilon, 0.002);
    assert_eq!(cfg.sweep.eps_grid, vec![0.1, 0.05]);
    assert_eq!(cfg.skeleton.target, "sine");
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(parse_with_overrides("[model]\nkapa = 1.0\n", &[]).is_err());
    assert!(parse_with_overrides("", &["integrator.nope=1".into()]).is_err());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(slowfast(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(slowfast(&["simulate", "--seed", "abc"]).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_one_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = run_in("simulate", &out, &["--set", "integrator.dt=0.01"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn failed_validation_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let res = run_in("validate", &out, &["--set", "model.gamma_coupling=0.5", "--set", "validate.probes=500"]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("Dissipativity_a"), "{err}");
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_in("simulate", &a, &QUICK).status.success());
    assert!(run_in("simulate", &b, &QUICK).status.success());
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}

#[test]
fn seed_changes_the_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_in("simulate", &a, &QUICK).status.success());
    let mut extra = QUICK.to_vec();
    extra.extend(["--seed", "7"]);
    assert!(run_in("simulate", &b, &extra).status.success());
    assert_ne!(fs::read(a.join("slow_path.csv")).unwrap(), fs::read(b.join("slow_path.csv")).unwrap());
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(run_in("averaged", &out, &[]).status.success());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let config = fs::read(out.join("config.toml")).unwrap();
    let hash = sha256_hex(&config);
    assert_eq!(manifest["config_hash"], hash.as_str());
    assert_eq!(manifest["subcommand"], "averaged");
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(!outputs.is_empty());
    for (name, digest) in outputs {
        let bytes = fs::read(out.join(name)).unwrap();
        assert_eq!(digest, sha256_hex(&bytes).as_str(), "{name}");
        if name.ends_with(".csv") {
            assert!(String::from_utf8(bytes).unwrap().starts_with(&format!("# manifest sha256:{hash}\n")));
        }
    }
    assert_eq!(manifest["conditions"].as_array().unwrap().len(), 9);
}

#[test]
fn saved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_in("skeleton", &a, &["--set", "skeleton.f=0.5"]).status.success());
    let saved = a.join("config.toml");
    assert!(run_in("skeleton", &b, &["--config", saved.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("skeleton.csv")).unwrap(), fs::read(b.join("skeleton.csv")).unwrap());
}

#[test]
fn plot_trajectory_from_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(run_in("simulate", &out, &QUICK).status.success());
    let plots = tmp.path().join("plots");
    let res = slowfast(&[
        "plot",
        "--artifact",
        out.join("slow_path.csv").to_str().unwrap(),
        "--kind",
        "trajectory",
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let dat =
        fs::read_dir(&plots).unwrap().filter_map(|e| e.ok()).find(|e| e.path().extension().is_some_and(|x| x == "dat"));
    let text = fs::read_to_string(dat.unwrap().path()).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert!(rows > 100);
}

#[test]
fn plot_rejects_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(run_in("skeleton", &out, &[]).status.success());
    let res = slowfast(&[
        "plot",
        "--artifact",
        out.join("skeleton.csv").to_str().unwrap(),
        "--kind",
        "mixing",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("alpha_hat"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_with_overrides(&fs::read_to_string(&path).unwrap(), &[]).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
