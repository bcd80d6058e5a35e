//! End-to-end tests against the built binary: every command, the exit-code
//! contract, and tree-level determinism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_keyframe-pipeline"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn run_code(args: &[&str]) -> (i32, Output) {
    let out = bin().args(args).output().expect("spawn binary");
    (out.status.code().unwrap_or(-1), out)
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

/// All files under a root, keyed by relative path. `run_manifest.json`
/// carries a timestamp and is excluded from determinism comparisons.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else if p.file_name().is_some_and(|n| n != "run_manifest.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn make_dataset(dir: &Path, suite: &str, count: usize, frames: usize, seed: u64) {
    run_ok(&[
        "synth-gen",
        "--suite",
        suite,
        "--count",
        &count.to_string(),
        "--frames",
        &frames.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        &path(dir),
    ]);
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out) = run_code(&["--help"]);
    assert_eq!(code, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth-gen", "extract", "gap-train", "gap-eval", "run", "compare", "bench"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    assert_eq!(run_code(&["--version"]).0, 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run_code(&["--bogus"]).0, 1);
    assert_eq!(run_code(&["synth-gen"]).0, 1); // missing --out
    assert_eq!(run_code(&["frobnicate"]).0, 1);
    // conflicting budget flags are rejected by the parser
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run_code(&[
        "extract",
        "--dataset",
        &path(tmp.path()),
        "--density",
        "0.2",
        "--count",
        "5",
        "--out",
        &path(&tmp.path().join("x")),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run_code(&[
        "synth-gen",
        "--suite",
        "warp-drive",
        "--out",
        &path(&tmp.path().join("d")),
    ]);
    assert_eq!(code, 1);

    // neither --suite nor --script-dir
    let (code, _) = run_code(&["synth-gen", "--out", &path(&tmp.path().join("d2"))]);
    assert_eq!(code, 1);
}

#[test]
fn missing_dataset_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run_code(&[
        "extract",
        "--dataset",
        &path(&tmp.path().join("nope")),
        "--density",
        "0.2",
        "--out",
        &path(&tmp.path().join("out")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn synth_gen_writes_expected_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "pick-place", 2, 20, 7);

    assert!(ds.join("run_manifest.json").exists());
    assert!(ds.join("index.json").exists());
    for ep in ["ep-000", "ep-001"] {
        let dir = ds.join("episodes").join(ep);
        assert!(dir.join("manifest.json").exists());
        assert!(dir.join("scene.json").exists());
        assert!(dir.join("poses.csv").exists());
        assert!(dir.join("frames/frame_00000.pgm").exists());
        assert!(dir.join("frames/frame_00019.pgm").exists());
    }
    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ds.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["episodes"].as_array().unwrap().len(), 2);

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ds.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth-gen");
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn synth_gen_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    make_dataset(&a, "mixed", 3, 18, 11);
    make_dataset(&b, "mixed", 3, 18, 11);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb, "identical invocations must write identical trees");

    let c = tmp.path().join("c");
    make_dataset(&c, "mixed", 3, 18, 12);
    assert_ne!(ta, tree(&c), "a different seed must change the data");
}

#[test]
fn synth_gen_count_zero_writes_empty_index() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("empty");
    make_dataset(&ds, "cv", 0, 16, 1);
    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ds.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["episodes"].as_array().unwrap().len(), 0);
}

#[test]
fn extract_writes_records_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "pick-place", 2, 24, 5);
    let keys = tmp.path().join("keys");
    run_ok(&["extract", "--dataset", &path(&ds), "--count", "6", "--out", &path(&keys)]);

    let record: serde_json::Value = serde_json::from_slice(
        &std::fs::read(keys.join("episodes/ep-000/keyframes.json")).unwrap(),
    )
    .unwrap();
    let indices: Vec<u64> = record["indices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(indices.first(), Some(&0));
    assert_eq!(indices.last(), Some(&23));
    assert_eq!(indices.len(), 6);
    assert_eq!(record["achieved_flag"], true);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(keys.join("extract_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["extracted"], 2);
    assert_eq!(summary["failed"], 0);
}

#[test]
fn gap_train_and_eval_on_constant_velocity() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "cv", 6, 32, 3);
    let keys = tmp.path().join("keys");
    run_ok(&["extract", "--dataset", &path(&ds), "--density", "0.2", "--out", &path(&keys)]);

    let model_dir = tmp.path().join("model");
    let out = run_ok(&[
        "gap-train",
        "--dataset",
        &path(&ds),
        "--keyframes",
        &path(&keys),
        "--encoder",
        "pose",
        "--lambda",
        "1e-8",
        "--holdout",
        "0.25",
        "--out",
        &path(&model_dir),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("holdout rmse"));
    assert!(model_dir.join("model.json").exists());

    let summary: serde_json::Value = serde_json::from_slice(
        &std::fs::read(model_dir.join("train_summary.json")).unwrap(),
    )
    .unwrap();
    let rmse = summary["holdout_rmse_frames"].as_f64().unwrap();
    assert!(rmse <= 1.0, "constant-velocity holdout rmse {rmse}");

    let eval_dir = tmp.path().join("eval");
    run_ok(&[
        "gap-eval",
        "--dataset",
        &path(&ds),
        "--keyframes",
        &path(&keys),
        "--model",
        &path(&model_dir.join("model.json")),
        "--out",
        &path(&eval_dir),
    ]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_dir.join("gap_eval.json")).unwrap()).unwrap();
    assert!(report["rmse_frames"].as_f64().unwrap() <= 1.0);
    assert!(report["pairs"].as_u64().unwrap() > 0);
}

#[test]
fn run_reconstructs_and_dumps_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "pick-place", 2, 20, 9);
    let out_dir = tmp.path().join("run");
    run_ok(&[
        "run",
        "--dataset",
        &path(&ds),
        "--count",
        "6",
        "--selection",
        "motion-aware",
        "--interpolator",
        "pose-rerender",
        "--dump-frames",
        "--out",
        &path(&out_dir),
    ]);

    let ep = out_dir.join("episodes/ep-000");
    assert!(ep.join("frames/frame_00000.pgm").exists());
    assert!(ep.join("frames/frame_00019.pgm").exists());

    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ep.join("sidecar.json")).unwrap()).unwrap();
    assert_eq!(sidecar["interpolator"], "pose_rerender");
    assert_eq!(sidecar["keyframe_positions"][0], 0);

    // Breakpoint keys + oracle + re-rendering reconstruct exactly.
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ep.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["psnr_db"], "inf");
    assert_eq!(metrics["ssim"], 1.0);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("run_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"], 0);

    // Reconstructed frames are byte-identical to the dataset's.
    let truth = std::fs::read(ds.join("episodes/ep-000/frames/frame_00007.pgm")).unwrap();
    let rebuilt = std::fs::read(ep.join("frames/frame_00007.pgm")).unwrap();
    assert_eq!(truth, rebuilt);
}

#[test]
fn run_requires_model_for_predicted_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "cv", 1, 16, 2);
    let (code, _) = run_code(&[
        "run",
        "--dataset",
        &path(&ds),
        "--gap-source",
        "predicted",
        "--out",
        &path(&tmp.path().join("out")),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn compare_emits_aggregate_csv_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "pick-place", 3, 20, 13);

    let configs = serde_json::json!([
        {
            "name": "motion-aware",
            "config": {
                "keyframe_count": 6,
                "selection": "motion_aware",
                "generator": {"kind": "oracle", "seed": 0, "simulated_cost_per_frame": 0.0},
                "gap_source": "ground_truth",
                "interpolator": "pose_rerender"
            }
        },
        {
            "name": "uniform",
            "config": {
                "keyframe_count": 6,
                "selection": "uniform",
                "generator": {"kind": "oracle", "seed": 0, "simulated_cost_per_frame": 0.0},
                "gap_source": "ground_truth",
                "interpolator": "pose_rerender"
            }
        }
    ]);
    let configs_path = tmp.path().join("configs.json");
    std::fs::write(&configs_path, serde_json::to_vec_pretty(&configs).unwrap()).unwrap();

    let out_dir = tmp.path().join("cmp");
    let out = run_ok(&[
        "compare",
        "--dataset",
        &path(&ds),
        "--configs",
        &path(&configs_path),
        "--label",
        "pick-place",
        "--per-episode",
        "--out",
        &path(&out_dir),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("motion-aware"));
    assert!(stdout.contains("uniform"));

    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dataset,model,psnr_db,ssim,complexity,quality_index,keygen_s,gap_s,interp_s,total_s,acceleration"
    );
    assert_eq!(lines.count(), 2);
    let per_ep = std::fs::read_to_string(out_dir.join("episodes.csv")).unwrap();
    assert_eq!(per_ep.lines().count(), 1 + 3 * 2);

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["aggregate"][0]["model"], "motion-aware");
    assert_eq!(report["aggregate"][0]["quality_index"], 1.0);
    assert_eq!(report["index_flagged"], false);
}

#[test]
fn compare_runs_are_deterministic_excluding_timings() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "mixed", 2, 18, 21);

    let configs = serde_json::json!([
        {
            "name": "noisy",
            "config": {
                "keyframe_density": 0.3,
                "selection": "motion_aware",
                "generator": {
                    "kind": "noisy_oracle",
                    "noise_sigma": 5.0,
                    "seed": 9,
                    "simulated_cost_per_frame": 0.0
                },
                "gap_source": "ground_truth",
                "interpolator": "pixel_linear"
            }
        },
        {
            "name": "uniform",
            "config": {
                "keyframe_density": 0.3,
                "selection": "uniform",
                "generator": {"kind": "oracle", "seed": 0, "simulated_cost_per_frame": 0.0},
                "gap_source": "ground_truth",
                "interpolator": "pixel_linear"
            }
        }
    ]);
    let configs_path = tmp.path().join("configs.json");
    std::fs::write(&configs_path, serde_json::to_vec_pretty(&configs).unwrap()).unwrap();

    let strip_timings = |mut v: serde_json::Value| -> serde_json::Value {
        let keys = ["keyframe_gen_seconds", "gap_estimation_seconds", "interpolation_seconds",
                    "total_seconds", "baseline_seconds", "acceleration"];
        if let Some(outcomes) = v["outcomes"].as_array_mut() {
            for o in outcomes {
                for k in keys {
                    o["cost"][k] = 0.into();
                }
            }
        }
        if let Some(aggs) = v["aggregate"].as_array_mut() {
            for a in aggs {
                for k in keys {
                    a["cost"][k] = 0.into();
                }
            }
        }
        v
    };

    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let out_dir = tmp.path().join(name);
        run_ok(&[
            "compare",
            "--dataset",
            &path(&ds),
            "--configs",
            &path(&configs_path),
            "--out",
            &path(&out_dir),
        ]);
        let v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
        reports.push(strip_timings(v));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bench_reports_consistent_costs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    make_dataset(&ds, "cv", 2, 16, 6);
    let out_dir = tmp.path().join("bench");
    let out = run_ok(&[
        "bench",
        "--dataset",
        &path(&ds),
        "--repeats",
        "1",
        "--no-warmup",
        "--out",
        &path(&out_dir),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("baseline"));

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("bench.json")).unwrap()).unwrap();
    assert_eq!(summary["per_episode"].as_array().unwrap().len(), 2);
    let agg = &summary["aggregate"];
    let total = agg["total_seconds"].as_f64().unwrap();
    let sum = agg["keyframe_gen_seconds"].as_f64().unwrap()
        + agg["gap_estimation_seconds"].as_f64().unwrap()
        + agg["interpolation_seconds"].as_f64().unwrap();
    assert!((total - sum).abs() < 1e-9);
    assert!(agg["acceleration"].as_f64().unwrap() > 0.0);
}

#[test]
fn log_json_emits_parseable_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = bin()
        .args([
            "--log-json",
            "synth-gen",
            "--suite",
            "cv",
            "--count",
            "1",
            "--frames",
            "16",
            "--out",
            &path(&ds),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().find(|l| !l.is_empty()).expect("a log line");
    let v: serde_json::Value = serde_json::from_str(line).expect("json log line");
    assert!(v["event"].is_string());
}

#[test]
fn jobs_env_var_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let out = bin()
        .env("KEYFRAME_PIPELINE_JOBS", "1")
        .args(["synth-gen", "--suite", "cv", "--count", "1", "--frames", "16", "--out", &path(&ds)])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(ds.join("index.json").exists());
}
