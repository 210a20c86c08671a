use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use capfuse::fusenet::load_checkpoint;
use capfuse::sim::read_dataset;
use capfuse::RunConfig;

fn capfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capfuse")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = capfuse(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_is_deterministic_and_counts_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n_datasets = 3\nsim.duration = 4 # seconds\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["simulate", "--config", &cfg, "--out", p(&a), "--seed", "9"]);
    ok(&["simulate", "--config", &cfg, "--out", p(&b), "--seed", "9"]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
    let third = read_dataset(a.join("dataset_002.txt")).unwrap();
    assert_eq!(third.header_value("seed"), Some("11"));
}

#[test]
fn echoed_header_reproduces_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n_datasets = 2\nsim.duration = 3\nsim.vis_drift_rate = 0.03\n");
    let first = dir.path().join("first");
    ok(&["simulate", "--config", &cfg, "--out", p(&first), "--seed", "4", "--profile", "paper"]);
    let original = fs::read_to_string(first.join("dataset_001.txt")).unwrap();
    let echoed = RunConfig::from_header_line(original.lines().next().unwrap()).unwrap();
    assert_eq!(echoed.hyper.hidden_size, 200);
    let again_cfg = write_config(dir.path(), "echo.cfg", &echoed.to_text());
    let again = dir.path().join("again");
    ok(&["simulate", "--config", &again_cfg, "--out", p(&again)]);
    assert_eq!(fs::read_to_string(again.join("dataset_000.txt")).unwrap(), original);
}

#[test]
fn bad_configs_fail_with_the_key_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "sim.durration = 4\n");
    let out = capfuse(&["simulate", "--config", &cfg, "--out", p(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.durration"));
    assert!(!capfuse(&["simulate", "--profile", "lab", "--out", p(dir.path())]).status.success());
    assert!(!capfuse(&["simulate"]).status.success());
    assert!(!capfuse(&["localize-mag", p(&dir.path().join("missing.txt"))]).status.success());
}

#[test]
fn noiseless_localization_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "sim.duration = 2\nsim.mag_noise_sd = 0\nsim.vis_trans_noise_sd = 0\nsim.vis_rot_noise_sd = 0\nsim.vis_drift_rate = 0\n",
    );
    ok(&["simulate", "--config", &cfg, "--out", p(&dir.path().join("d"))]);
    let dataset = dir.path().join("d/dataset_000.txt");
    let est = dir.path().join("est.txt");
    ok(&["localize-mag", p(&dataset), "--config", &cfg, "--out", p(&est)]);
    let ds = read_dataset(&dataset).unwrap();
    let text = fs::read_to_string(&est).unwrap();
    assert!(text.starts_with("#capfuse-magloc v1 "));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), ds.gt.len());
    for (row, s) in rows.iter().zip(ds.gt.samples()) {
        assert_eq!(row[0], s.time);
        let t = s.pose.translation;
        let err = ((row[1] - t[0]).powi(2) + (row[2] - t[1]).powi(2) + (row[3] - t[2]).powi(2)).sqrt();
        assert!(err < 1e-6, "t={} err={err:e}", s.time);
    }
}

#[test]
fn train_then_evaluate_on_disjoint_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "n_datasets = 2\nsim.duration = 20\ntrain.max_epochs = 3\ntrain.warmup_epochs = 1\ntrain.window_length = 32\neval.buckets = 0.02,0.05\n",
    );
    let (train_dir, test_dir) = (dir.path().join("train"), dir.path().join("test"));
    ok(&["simulate", "--config", &cfg, "--out", p(&train_dir), "--seed", "10"]);
    ok(&["simulate", "--config", &cfg, "--out", p(&test_dir), "--seed", "50"]);
    let ckpt = dir.path().join("model.json");
    ok(&[
        "train",
        p(&train_dir.join("dataset_000.txt")),
        p(&train_dir.join("dataset_001.txt")),
        "--config",
        &cfg,
        "--out",
        p(&ckpt),
    ]);
    let model = load_checkpoint(&ckpt).unwrap();
    assert_eq!(model.hyperparams.hidden_size, 16);
    let log = fs::read_to_string(dir.path().join("model.json.log")).unwrap();
    assert!(log.starts_with("#capfuse-trainlog v1 "));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let report_dir = dir.path().join("eval");
    let out = ok(&[
        "evaluate",
        "--checkpoint",
        p(&ckpt),
        p(&test_dir.join("dataset_000.txt")),
        p(&test_dir.join("dataset_001.txt")),
        "--config",
        &cfg,
        "--out",
        p(&report_dir),
    ]);
    let rmse = fs::read_to_string(report_dir.join("rmse.txt")).unwrap();
    assert!(rmse.starts_with("#capfuse-rmse v1 "));
    let rows: Vec<&str> = rmse.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 6);
    for method in ["fusion", "evo_only", "magnetic_only"] {
        assert!(rows.iter().any(|r| r.split_whitespace().nth(1) == Some(method)));
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("magnetic_only"));
    assert!(report_dir.join("overlay_001.txt").exists());

    // Same seed, same data: the checkpoint is reproduced byte for byte.
    let again = dir.path().join("again.json");
    ok(&[
        "train",
        p(&train_dir.join("dataset_000.txt")),
        p(&train_dir.join("dataset_001.txt")),
        "--config",
        &cfg,
        "--out",
        p(&again),
    ]);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn noiseless_align_demo_recovers_the_cameras() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("align.txt");
    ok(&["align-demo", "--out", p(&out), "--seed", "3"]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("#capfuse-aligndemo v1 seed=3 "));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[7] < 1e-6 && r[8] < 1e-6, "{r:?}");
    }
}
