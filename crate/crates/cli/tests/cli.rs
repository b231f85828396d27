use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn belnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_belnet"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BELNET_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_burgers(dir: &Path, out: &str, seed: &str) {
    ok(&belnet(
        &["generate", "--problem", "burgers", "--mode", "fix", "--n-train", "3", "--n-test", "2", "--seed", seed, "--out", out],
        dir,
    ));
}

#[test]
fn generate_writes_both_splits_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    small_burgers(tmp.path(), "a", "7");
    small_burgers(tmp.path(), "b", "7");
    for split in ["train", "test"] {
        for file in ["meta.json", "samples.jsonl"] {
            let a = fs::read(tmp.path().join("a").join(split).join(file)).unwrap();
            let b = fs::read(tmp.path().join("b").join(split).join(file)).unwrap();
            assert_eq!(a, b, "{split}/{file}");
        }
    }
    let meta = read_json(&tmp.path().join("a/train/meta.json"));
    assert_eq!(meta["n_samples"], 3);
    let lines = fs::read_to_string(tmp.path().join("a/test/samples.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn empty_train_split_is_valid() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&belnet(
        &["generate", "--problem", "burgers", "--mode", "free", "--n-train", "0", "--n-test", "1", "--out", "d"],
        tmp.path(),
    ));
    assert_eq!(read_json(&tmp.path().join("d/train/meta.json"))["n_samples"], 0);
    assert_eq!(fs::read_to_string(tmp.path().join("d/train/samples.jsonl")).unwrap(), "");
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    small_burgers(tmp.path(), "flag", "11");
    let out = Command::new(env!("CARGO_BIN_EXE_belnet"))
        .args(["generate", "--problem", "burgers", "--mode", "fix", "--n-train", "3", "--n-test", "2", "--out", "env"])
        .current_dir(tmp.path())
        .env("BELNET_SEED", "11")
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(
        fs::read(tmp.path().join("flag/train/samples.jsonl")).unwrap(),
        fs::read(tmp.path().join("env/train/samples.jsonl")).unwrap()
    );
}

#[test]
fn train_eval_pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_burgers(dir, "data", "3");
    fs::write(dir.join("cfg.json"), r#"{"batch_size": 2, "optimizer": {"learning_rate": 0.002}}"#).unwrap();
    for run in ["r1", "r2"] {
        let stdout = ok(&belnet(
            &["train", "--model", "belnet", "--variant", "fix", "--data", "data", "--config", "cfg.json", "--epochs", "2", "--seed", "5", "--out", run],
            dir,
        ));
        assert!(stdout.contains("final loss"), "{stdout}");
        assert!(stdout.contains("parameters 72610"), "{stdout}");
        ok(&belnet(
            &["eval", "--checkpoint", &format!("{run}/model.json"), "--data", "data", "--out", &format!("{run}/report.json")],
            dir,
        ));
    }
    for file in ["model.json", "history.csv", "train_config.json", "report.json"] {
        assert_eq!(
            fs::read(dir.join("r1").join(file)).unwrap(),
            fs::read(dir.join("r2").join(file)).unwrap(),
            "{file}"
        );
    }

    // File beats preset, flags beat file.
    let config = read_json(&dir.join("r1/train_config.json"));
    assert_eq!(config["batch_size"], 2);
    assert_eq!(config["optimizer"]["learning_rate"], 0.002);
    assert_eq!(config["epochs"], 2);
    assert_eq!(config["seed"], 5);

    let report = read_json(&dir.join("r1/report.json"));
    let per_sample = report["errors"]["per_sample"].as_array().unwrap();
    let mean = per_sample.iter().map(|e| e[1].as_f64().unwrap()).sum::<f64>() / per_sample.len() as f64;
    assert!((mean - report["mean_relative_error_percent"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(report["parameter_count"], 72610);
    assert_eq!(report["train_config"]["seed"], 5);
    assert!(report.get("wall_clock_s").is_none());

    let manifest = read_json(&dir.join("r1/manifest.json"));
    assert_eq!(manifest["report_path"], "r1/report.json");
    for key in ["r1/model.json", "data/train/samples.jsonl", "data/test/samples.jsonl", "r1/report.json"] {
        assert_eq!(manifest["hashes"][key].as_str().unwrap().len(), 64, "{key}");
    }
    assert_eq!(
        manifest["experiment_id"],
        read_json(&dir.join("r2/manifest.json"))["experiment_id"]
    );
}

#[test]
fn zero_epochs_saves_the_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_burgers(dir, "data", "1");
    let stdout = ok(&belnet(
        &["train", "--model", "don", "--data", "data", "--epochs", "0", "--seed", "9", "--out", "r"],
        dir,
    ));
    assert!(stdout.contains("0 epochs"), "{stdout}");
    let ckpt = read_json(&dir.join("r/model.json"));
    assert_eq!(ckpt["architecture"]["kind"], "don");
    assert_eq!(fs::read_to_string(dir.join("r/history.csv")).unwrap(), "epoch,mean_loss\n");
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Usage.
    assert_eq!(belnet(&["generate", "--problem", "heat"], dir).status.code(), Some(1));
    assert_eq!(belnet(&["verify", "--inject-fault", "leaf"], dir).status.code(), Some(1));
    // I/O: missing dataset, named in the message.
    let out = belnet(&["train", "--model", "belnet", "--data", "nowhere", "--out", "r"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    // Configuration: DeepONet on free-mode sensors, and a variant mismatch.
    ok(&belnet(
        &["generate", "--problem", "burgers", "--mode", "free", "--n-train", "2", "--n-test", "1", "--out", "free"],
        dir,
    ));
    assert_eq!(belnet(&["train", "--model", "don", "--data", "free", "--out", "r"], dir).status.code(), Some(2));
    let out = belnet(&["train", "--model", "belnet", "--variant", "fix", "--data", "free", "--out", "r"], dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sensor_count_mismatch_names_both_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("gen.json"), r#"{"n_sensors": 30}"#).unwrap();
    ok(&belnet(
        &["generate", "--problem", "burgers", "--mode", "fix", "--n-train", "2", "--n-test", "1", "--config", "gen.json", "--out", "d"],
        dir,
    ));
    let out = belnet(&["train", "--model", "belnet", "--data", "d", "--epochs", "1", "--out", "r"], dir);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("25") && err.contains("30"), "{err}");
}

#[test]
fn verify_filters_suites_and_reports_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = belnet(&["verify", "--suite", "convolution", "--json"], tmp.path());
    let summary: Value = serde_json::from_str(&ok(&out)).unwrap();
    assert_eq!(summary["passed"], true);
    let results = summary["results"].as_array().unwrap();
    assert_eq!(results.len(), 6);
    assert!(results.iter().all(|r| r["suite"] == "convolution"));
}

#[test]
fn injected_fault_fails_the_gradient_suite_and_names_the_op() {
    let tmp = tempfile::tempdir().unwrap();
    let out = belnet(&["verify", "--suite", "gradient", "--inject-fault", "transpose"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gradient/op_transpose"), "{stderr}");
    assert!(stderr.contains("required < 1e-5"), "{stderr}");
}
