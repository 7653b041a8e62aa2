//! End-to-end run of the command-line pipeline on a small dataset:
//! gen-data -> render -> degrade -> train -> bank -> retrieve -> eval,
//! plus pose recovery and visualization, exercising exit codes and the
//! on-disk formats the way a user would.

use std::fs;
use std::path::Path;
use std::process::Command;

fn lfd_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lfd"))
}

fn run_ok(args: &[&str]) {
    let out = lfd_bin().args(args).output().expect("spawn lfd");
    assert!(
        out.status.success(),
        "lfd {args:?} failed.\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_produces_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config_path = root.join("config.json");
    fs::write(
        &config_path,
        r#"{
            "resolution": 28,
            "views_per_model": 12,
            "net": {"pool_to": 14, "hidden": [96, 64], "dim": 32},
            "train": {"epochs": 30, "batch_size": 16, "decay_epochs": [15, 25]},
            "eval": {"samples_per_mesh": 1500, "voxel_resolution": 32},
            "dataset": {
                "families": [
                    {"kind": "chair", "count": 2},
                    {"kind": "table", "count": 2},
                    {"kind": "car", "count": 2}
                ],
                "separation": 0.02
            }
        }"#,
    )
    .unwrap();
    let cfg = config_path.to_str().unwrap();
    let path = |name: &str| root.join(name).to_str().unwrap().to_string();

    run_ok(&["--seed", "7", "--config", cfg, "gen-data", "--out", &path("models")]);
    assert!(root.join("models/manifest.json").exists());
    assert_eq!(count_files(&root.join("models"), "obj"), 6);

    run_ok(&[
        "--seed", "7", "--config", cfg, "--threads", "2",
        "render", "--models", &path("models"), "--out", &path("rendered"),
    ]);
    assert_eq!(count_files(&root.join("rendered"), "lfd"), 72);

    run_ok(&[
        "--seed", "7", "--config", cfg,
        "degrade", "--in", &path("rendered"), "--out", &path("predicted"),
    ]);
    assert_eq!(count_files(&root.join("predicted"), "lfd"), 72);

    run_ok(&[
        "--seed", "7", "--config", cfg,
        "train",
        "--rendered", &path("rendered"),
        "--predicted", &path("predicted"),
        "--out", &path("net.lfc"),
        "--curve", &path("curve.csv"),
    ]);
    let curve = fs::read_to_string(root.join("curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,lr,total,softmax,center,tcl,fm"));
    assert_eq!(curve.lines().count(), 31);

    run_ok(&[
        "--seed", "7", "--config", cfg,
        "bank", "--checkpoint", &path("net.lfc"), "--out", &path("seen.lfb"),
    ]);

    run_ok(&[
        "--seed", "7", "--config", cfg,
        "retrieve",
        "--checkpoint", &path("net.lfc"),
        "--bank", &path("seen.lfb"),
        "--queries", &path("predicted"),
        "--out", &path("ranked.jsonl"),
    ]);
    let ranked = fs::read_to_string(root.join("ranked.jsonl")).unwrap();
    assert_eq!(ranked.lines().count(), 72);
    let first: serde_json::Value = serde_json::from_str(ranked.lines().next().unwrap()).unwrap();
    assert_eq!(first["ranked"].as_array().unwrap().len(), 6);
    assert_eq!(first["comparison_count"], 6);

    run_ok(&[
        "--seed", "7", "--config", cfg,
        "eval",
        "--ranked", &path("ranked.jsonl"),
        "--meshes", &path("models"),
        "--out", &path("report.json"),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("report.json")).unwrap()).unwrap();
    for key in ["acc_top1", "acc_top10", "d_hau_mean", "d_iou_mean", "baseline", "n_queries"] {
        assert!(report.get(key).is_some(), "report missing {key}");
    }
    assert_eq!(report["n_queries"], 72);
    assert!(report["baseline"]["d_hau"].as_f64().unwrap() > 0.0);

    // Unseen bank from meshes by multi-view averaging.
    run_ok(&[
        "--seed", "7", "--config", cfg,
        "bank",
        "--checkpoint", &path("net.lfc"),
        "--meshes", &path("models"),
        "--views", "10",
        "--out", &path("unseen.lfb"),
    ]);

    // Pose from a rendered field.
    let some_lf = fs::read_dir(root.join("rendered"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|x| x == "lfd"))
        .unwrap();
    run_ok(&[
        "--seed", "7", "--config", cfg,
        "pose", "--lf", some_lf.to_str().unwrap(), "--out", &path("pose.json"),
    ]);
    let pose: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("pose.json")).unwrap()).unwrap();
    assert_eq!(pose["rotation"].as_array().unwrap().len(), 9);
    assert!(pose["rms_px"].as_f64().unwrap() < 0.1);

    // Visualization: three channel images, unmasked pixels black.
    run_ok(&[
        "--config", cfg,
        "viz", "--lf", some_lf.to_str().unwrap(), "--out", &path("view"),
    ]);
    for suffix in ["x", "y", "z"] {
        let ppm = fs::read(root.join(format!("view_{suffix}.ppm"))).unwrap();
        assert!(ppm.starts_with(b"P6\n28 28\n255\n"));
        assert_eq!(&ppm[ppm.len() - 3..], &[0, 0, 0][..]);
    }
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("c.json");
    fs::write(
        &cfg_path,
        r#"{"resolution": 28, "views_per_model": 4,
            "dataset": {"families": [{"kind": "table", "count": 2}], "separation": 0.02}}"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    for pass in ["a", "b"] {
        let models = root.join(format!("models_{pass}"));
        let rendered = root.join(format!("rendered_{pass}"));
        run_ok(&["--seed", "3", "--config", cfg, "gen-data", "--out", models.to_str().unwrap()]);
        run_ok(&[
            "--seed", "3", "--config", cfg,
            "--threads", if pass == "a" { "1" } else { "4" },
            "render", "--models", models.to_str().unwrap(), "--out", rendered.to_str().unwrap(),
        ]);
    }
    for name in ["table_000.obj", "table_001.obj", "manifest.json"] {
        assert_eq!(
            fs::read(root.join("models_a").join(name)).unwrap(),
            fs::read(root.join("models_b").join(name)).unwrap(),
            "{name} differs between passes"
        );
    }
    for entry in fs::read_dir(root.join("rendered_a")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(root.join("rendered_a").join(&name)).unwrap(),
            fs::read(root.join("rendered_b").join(&name)).unwrap(),
            "{name:?} differs across thread counts"
        );
    }
}

#[test]
fn usage_and_data_errors_use_distinct_exit_codes() {
    let out = lfd_bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = lfd_bin().args(["gen-data"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "missing required flag is a usage error");

    let dir = tempfile::tempdir().unwrap();
    let out = lfd_bin()
        .args([
            "eval",
            "--ranked",
            dir.path().join("missing.jsonl").to_str().unwrap(),
            "--meshes",
            dir.path().to_str().unwrap(),
            "--out",
            dir.path().join("r.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "data failure exits 2");
}

#[test]
fn eval_rejects_ground_truth_missing_from_the_bank() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("c.json");
    fs::write(
        &cfg_path,
        r#"{"resolution": 28, "views_per_model": 3,
            "eval": {"samples_per_mesh": 500, "voxel_resolution": 16},
            "dataset": {"families": [{"kind": "bed", "count": 2}], "separation": 0.02}}"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    run_ok(&["--seed", "5", "--config", cfg, "gen-data", "--out", &p("models")]);
    run_ok(&["--seed", "5", "--config", cfg, "render", "--models", &p("models"), "--out", &p("r")]);
    // Hand-written ranked line whose ground truth is not in the mesh dir.
    fs::write(
        root.join("ranked.jsonl"),
        r#"{"query_id":"q0","gt_model_id":"ghost_999","ranked":[{"model_id":"bed_000","distance":0.1}],"comparison_count":1}"#,
    )
    .unwrap();
    let out = lfd_bin()
        .args([
            "--config", cfg,
            "eval", "--ranked", &p("ranked.jsonl"), "--meshes", &p("models"), "--out", &p("rep.json"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ghost_999"), "stderr: {stderr}");
}

fn count_files(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == ext))
        .count()
}
