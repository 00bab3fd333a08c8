//! Black-box tests of the command-line binary: determinism of generated
//! artifacts and the documented exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_led-lab");

const SMALL_CONFIG: &str = r#"
seed = 7

[worldgen]
width = 64
height = 64
floors_min = 1
floors_max = 1
rooms_min = 3
rooms_max = 4

[dataset]
n_envs = 4
n_val_unseen_envs = 1
n_test_envs = 0
episodes_per_train_env = 3
episodes_per_eval_env = 2
val_seen_fraction = 0.25
"#;

fn hash_tree(dir: &Path) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, led_lab::util::sha256_hex(&fs::read(&p).unwrap())));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_data_is_deterministic_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let run = |out: &Path| {
        let status = Command::new(BIN)
            .args(["gen-data", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (out1, out2) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&out1);
    run(&out2);
    let (h1, h2) = (hash_tree(&out1), hash_tree(&out2));
    assert!(!h1.is_empty());
    assert_eq!(h1, h2, "gen-data must produce byte-identical trees");
    assert!(out1.join("manifest.json").exists());
    assert!(out1.join("run.json").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[dataset]\nn_envs = 0\n").unwrap();
    let status = Command::new(BIN)
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_thread_setting_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let status = Command::new(BIN)
        .env("LED_LAB_THREADS", "zero")
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn refuses_to_clobber_non_empty_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("precious.txt"), "keep me").unwrap();
    let status = Command::new(BIN)
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert_eq!(fs::read_to_string(out.join("precious.txt")).unwrap(), "keep me");
}
