//! End-to-end runs of the `smpl` binary.

use std::path::Path;
use std::process::{Command, Output};

use smpl_core::config::preset_source;

fn smpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpl"))
        .args(args)
        .env_remove("SMPL_SEED")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Trains a short run of `preset` into `dir`.
fn short_run(preset: &str, dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--preset",
        preset,
        "--set",
        "train.steps=40",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    smpl(&args)
}

#[test]
fn train_writes_artifacts_and_records_the_merged_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let o = short_run(
        "moons-smpl",
        &dir,
        &["--seed", "7", "--set", "losses.lambda=0.5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy"));
    for f in [
        "metrics.csv",
        "metrics.jsonl",
        "model.ckpt",
        "manifest.json",
        "config.toml",
        "trajectory.csv",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let m = read_json(&dir.join("manifest.json"));
    assert_eq!(m["config"]["losses"]["lambda"], 0.5);
    assert_eq!(m["config"]["train"]["steps"], 40);
    assert_eq!(m["seeds"], serde_json::json!([7]));
    assert_eq!(m["config"]["seed"], 7);
    for f in m["files"].as_array().unwrap() {
        assert!(
            dir.join(f.as_str().unwrap()).is_file(),
            "manifest lists absent {f}"
        );
    }
    let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(csv.starts_with("step,l1,l_uda,l_mpl,l2,delta_ce"));
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = smpl(&["train", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.toml"));
}

#[test]
fn invalid_values_and_flags_exit_with_code_2() {
    let o = smpl(&[
        "train",
        "--preset",
        "moons-smpl",
        "--set",
        "losses.ema_decay=1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("losses.ema_decay"), "{}", stderr(&o));
    let o = smpl(&["train", "--preset", "moons-smpl", "--set", "losses.lamda=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));
    assert_eq!(
        smpl(&["train", "--preset", "no-such-preset"]).status.code(),
        Some(2)
    );
    assert_eq!(smpl(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(smpl(&["train"]).status.code(), Some(2));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_smpl"))
        .args([
            "train",
            "--preset",
            "moons-supervised",
            "--set",
            "train.steps=5",
            "--out",
        ])
        .arg(tmp.path())
        .env("SMPL_SEED", "31")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read_json(&tmp.path().join("manifest.json"))["seeds"],
        serde_json::json!([31])
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_smpl"))
        .args(["train", "--preset", "moons-smpl"])
        .env("SMPL_SEED", "minus-one")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reruns_overwrite_with_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert!(short_run("moons-mpl", &a, &["--seed", "3"])
        .status
        .success());
    let first: Vec<(String, Vec<u8>)> = [
        "metrics.csv",
        "metrics.jsonl",
        "model.ckpt",
        "teacher.ckpt",
        "trajectory.json",
        "config.toml",
        "manifest.json",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(a.join(f)).unwrap()))
    .collect();
    assert!(short_run("moons-mpl", &a, &["--seed", "3"])
        .status
        .success());
    for (f, bytes) in first {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), bytes, "{f} changed");
    }
}

#[test]
fn boundary_export_covers_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(short_run("moons-smpl", &dir, &[]).status.success());
    let ckpt = dir.join("model.ckpt");
    let export = |res: &str| {
        smpl(&[
            "export-boundary",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--resolution",
            res,
            "--bounds",
            "-2,3,-1.5,2",
        ])
    };
    let o = export("30");
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,class,max_prob"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 900);
    assert_eq!((rows[0][0], rows[0][1]), (-2.0, -1.5));
    assert_eq!((rows[899][0], rows[899][1]), (3.0, 2.0));
    for r in &rows {
        assert!(r[2] == 0.0 || r[2] == 1.0);
        assert!((0.5..=1.0).contains(&r[3]));
    }
    assert_eq!(stdout(&export("30")), text);

    let default = smpl(&["export-boundary", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(stdout(&default).lines().count(), 40_001);
}

#[test]
fn boundary_export_rejects_non_planar_models() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("img");
    let o = smpl(&[
        "train",
        "--preset",
        "micro-image-supervised",
        "--set",
        "train.steps=2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = smpl(&[
        "export-boundary",
        "--checkpoint",
        dir.join("model.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("64 inputs"));
    let o = smpl(&[
        "export-boundary",
        "--checkpoint",
        dir.join("missing.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trajectory_export_distinguishes_the_two_updates() {
    let tmp = tempfile::tempdir().unwrap();
    let smpl_dir = tmp.path().join("smpl");
    let sup_dir = tmp.path().join("sup");
    assert!(short_run("moons-smpl", &smpl_dir, &[]).status.success());
    assert!(short_run("moons-supervised", &sup_dir, &[])
        .status
        .success());

    let rows = |dir: &Path| {
        let o = smpl(&["export-trajectory", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
            .lines()
            .skip(1)
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    let two = rows(&smpl_dir);
    assert_eq!(two.len(), 1 + 2 * 40);
    assert!(two[0].starts_with(",init,"));
    assert!(two[1].starts_with("0,step_one,"));
    assert!(two[2].starts_with("0,step_two,"));
    let one = rows(&sup_dir);
    assert_eq!(one.len(), 1 + 40);
    assert!(one[1].starts_with("0,update,"));

    let out = tmp.path().join("t.csv");
    let o = smpl(&[
        "export-trajectory",
        smpl_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 82);
}

#[test]
fn trajectory_export_without_snapshots_fails_explicitly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(
        short_run("moons-smpl", &dir, &["--set", "train.trajectory_every=0"])
            .status
            .success()
    );
    assert!(!dir.join("trajectory.json").exists());
    let o = smpl(&["export-trajectory", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no trajectory"));
}

#[test]
fn memory_report_shows_the_copy_ratio() {
    let o = smpl(&["memory-report"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("resident ratio (mpl/smpl)  2.00"));
    assert!(text.contains("gradient values per step"));

    let o = smpl(&[
        "memory-report",
        "--preset",
        "micro-image-smpl",
        "--json",
        "--set",
        "model.hidden=[5,7]",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["resident_ratio"], 2.0);
    let p = (64 * 5 + 5) + (5 * 7 + 7) + (7 * 2 + 2);
    assert_eq!(v["smpl"]["param_count"], p);
    assert_eq!(v["mpl"]["resident_param_count"], 2 * p);
    assert!(v["smpl"]["transient_gradient_count"].as_u64().unwrap() > 0);
}

#[test]
fn compare_summarizes_with_the_documented_sign() {
    let o = smpl(&[
        "compare",
        "--presets",
        "moons-smpl,moons-supervised",
        "--seeds",
        "3",
        "--set",
        "train.steps=30",
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mean = |i: usize| v["summaries"][i]["mean"].as_f64().unwrap();
    let delta = v["deltas"][0]["mean"].as_f64().unwrap();
    assert!((delta - (mean(0) - mean(1))).abs() < 1e-12);
    assert_eq!(v["deltas"][0]["minuend"], "moons-smpl");
    assert_eq!(v["runs"].as_array().unwrap().len(), 6);

    let one = smpl(&[
        "compare",
        "--presets",
        "moons-smpl,moons-supervised",
        "--seeds",
        "1",
        "--set",
        "train.steps=5",
    ]);
    assert!(one.status.success());
    assert!(stdout(&one).contains("NA"));
    assert_eq!(
        smpl(&["compare", "--presets", "moons-smpl", "--seeds", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn compare_keeps_going_past_failed_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let exploding = tmp.path().join("exploding.toml");
    let src = preset_source("moons-smpl")
        .unwrap()
        .replace("lr1 = 0.1", "lr1 = 1e200")
        .replace("lr2 = 0.1", "lr2 = 1e200");
    std::fs::write(&exploding, src).unwrap();
    let out = tmp.path().join("cmp");
    let o = smpl(&[
        "compare",
        "--presets",
        &format!("moons-supervised,{}", exploding.display()),
        "--seeds",
        "2",
        "--set",
        "train.steps=20",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("moons-supervised"), "{text}");
    assert!(
        stderr(&o).contains("exploding seed 0 failed"),
        "{}",
        stderr(&o)
    );
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["summaries"][0]["runs"], 2);
    assert_eq!(summary["summaries"][1]["failures"], 2);
    assert!(out.join("moons-supervised/seed-1/metrics.csv").is_file());
    assert!(out.join("manifest.json").is_file());
}
