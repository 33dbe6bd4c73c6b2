use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn task(family: &str, seed: u64) -> Value {
    json!({"family": family, "seed": seed, "num_classes": 3, "samples_per_class": 12, "image_size": [1, 8, 8]})
}

fn write_config(dir: &Path, zoo: &str) -> PathBuf {
    let config = json!({
        "zoo_root": zoo,
        "dataset_dir": "data",
        "output_dir": "out",
        "tasks": [task("shapes", 1), task("stripes", 2), task("blobs", 3), task("shapes", 4)],
        "ot": {"sample_count": 24, "embedding": {"kind": "random_projection", "output_dim": 8, "seed": 0}},
        "search_space": {"cells": 1, "nodes_per_cell": 2, "channels": 4, "image_shape": [1, 8, 8]},
        "train": {"epochs": 1, "batch_size": 8, "curve_log_every": 2},
        "seeds": [0, 1]
    });
    let path = dir.join("otnas.json");
    fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path
}

fn otnas(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otnas"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("OTNAS_ZOO")
        .output()
        .unwrap()
}

fn ok(output: Output) -> Value {
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        output.status.success(),
        "exit {:?}: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    assert_eq!(stdout.lines().count(), 1, "{stdout}");
    serde_json::from_str(&stdout).unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv" || x == "txt") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const TARGET: &str = "shapes-s4-k3";

fn experiment(config: &Path, out: &str) {
    for args in [
        vec!["scratch", "--target", TARGET],
        vec!["transfer", "--target", TARGET],
        vec!["oracle", "--target", TARGET],
        vec!["loo", "--target", TARGET],
        vec!["dist"],
        vec!["report"],
    ] {
        let mut full: Vec<&str> = vec!["--out", out];
        full.extend(args);
        ok(otnas(config, &full));
    }
}

#[test]
fn full_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zoo");
    let generated = ok(otnas(&config, &["gen-data"]));
    assert_eq!(generated["datasets"].as_array().unwrap().len(), 4);
    for name in ["shapes-s1-k3", "stripes-s2-k3", "blobs-s3-k3"] {
        let v = ok(otnas(&config, &["pretrain", "--target", name]));
        assert_eq!(v["entries"][0]["status"], "trained");
    }
    // pretraining again leaves the zoo alone
    let again = ok(otnas(&config, &["pretrain", "--target", "shapes-s1-k3"]));
    assert_eq!(again["entries"][0]["status"], "existing");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    experiment(&config, a.to_str().unwrap());
    experiment(&config, b.to_str().unwrap());

    let oracle_runs = fs::read_dir(a.join("runs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("__grid_"))
        .count();
    assert_eq!(oracle_runs, 3 * 2, "three zoo sources, two seeds");

    let files_a = csv_files(&a);
    assert!(files_a.contains_key("comparison.csv"));
    assert!(files_a.contains_key("gapcount.txt"));
    assert!(files_a.contains_key("distances.csv"));
    assert_eq!(files_a, csv_files(&b));

    let comparison = String::from_utf8(files_a["comparison.csv"].clone()).unwrap();
    assert!(comparison.starts_with("target,mode,source,acc,ri_vs_scratch,speedup\n"));
    for mode in ["scratch", "ot_transfer", "loo_transfer", "oracle", "worst"] {
        assert!(comparison.contains(&format!("{TARGET},{mode},")), "{comparison}");
    }
}

#[test]
fn single_seed_oracle_writes_one_file_per_source() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zoo");
    ok(otnas(&config, &["gen-data"]));
    for name in ["shapes-s1-k3", "stripes-s2-k3", "blobs-s3-k3"] {
        ok(otnas(&config, &["pretrain", "--target", name]));
    }
    let v = ok(otnas(&config, &["--seed", "5", "--jobs", "2", "oracle", "--target", TARGET]));
    assert_eq!(v["runs"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_dir(dir.path().join("out/runs")).unwrap().count(), 3);
}

#[test]
fn empty_zoo_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zoo");
    ok(otnas(&config, &["gen-data"]));
    let out = otnas(&config, &["transfer", "--target", TARGET]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
    assert!(out.stdout.is_empty());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"zoo_root": "z", "dataset_dir": "d", "surprise": 1}"#).unwrap();
    assert_eq!(otnas(&path, &["dist"]).status.code(), Some(2));
    fs::write(&path, r#"{"zoo_root": "z", "dataset_dir": "d", "seeds": []}"#).unwrap();
    assert_eq!(otnas(&path, &["dist"]).status.code(), Some(2));
    assert_eq!(otnas(&dir.path().join("missing.json"), &["dist"]).status.code(), Some(2));
}

#[test]
fn corrupted_zoo_state_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zoo");
    ok(otnas(&config, &["gen-data"]));
    ok(otnas(&config, &["pretrain", "--target", "stripes-s2-k3"]));
    let states = dir.path().join("zoo/states");
    for e in fs::read_dir(&states).unwrap() {
        let p = e.unwrap().path();
        let mut bytes = fs::read(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&p, bytes).unwrap();
    }
    let out = otnas(&config, &["transfer", "--target", TARGET]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zoo_root_can_be_overridden_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "zoo");
    ok(otnas(&config, &["gen-data"]));
    let elsewhere = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_otnas"))
        .arg("--config")
        .arg(&config)
        .args(["pretrain", "--target", "blobs-s3-k3"])
        .env("OTNAS_ZOO", &elsewhere)
        .output()
        .unwrap();
    ok(out);
    assert!(elsewhere.join("index.json").is_file());
    assert!(!dir.path().join("zoo").exists());
}
