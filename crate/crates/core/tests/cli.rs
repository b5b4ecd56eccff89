use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[problem]
dim = 4
kappa = { uniform = { lo = 10.0, hi = 50.0 } }
train_size = 8
test_size = 8

[env]
budget = 12
m1 = 4
m2 = 4

[agent]
episodes = 40

[actions]
variant = "H1"

[tuner]
max_iters = 15
sample_size = 4

[sweep]
episodes = [10, 20]
seeds = 2
dims = [2, 3]
"#;

fn sus(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sus"))
        .args(args)
        .arg("--config")
        .arg(config)
        .args(["--seed", "5", "--out"])
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("out");
    (dir, config, out)
}

#[test]
fn every_subcommand_writes_outputs_and_manifest() {
    let (_dir, config, out) = setup();
    for cmd in ["gen-problems", "tune", "train", "eval", "export-policy", "sweep-episodes", "sweep-dim"] {
        let o = sus(&[cmd], &config, &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("{cmd}_manifest.json"))).unwrap()).unwrap();
        assert_eq!(manifest["command"], cmd);
        assert_eq!(manifest["seed"], 5);
        assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 16);
        for f in manifest["outputs"].as_array().unwrap() {
            assert!(out.join(f.as_str().unwrap()).exists(), "{cmd}: missing {f}");
        }
    }
    for f in ["eval.csv", "policy.csv", "sweep_episodes.csv", "sweep_dim.csv", "qtable.json", "tuned.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn bad_config_fails_with_diagnostic() {
    let (dir, config, out) = setup();
    fs::write(&config, "[env]\nbudget = 0\n").unwrap();
    let o = sus(&["train"], &config, &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));

    let missing = dir.path().join("absent.toml");
    let o = sus(&["eval"], &missing, &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
}

#[test]
fn table_from_other_configuration_is_rejected() {
    let (_dir, config, out) = setup();
    assert!(sus(&["train"], &config, &out).status.success());
    fs::write(&config, CONFIG.replace("m1 = 4", "m1 = 5")).unwrap();
    let o = sus(&["export-policy"], &config, &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("fingerprint"));
}
