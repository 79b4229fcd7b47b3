//! Black-box tests of the binary: exit codes, validation, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_thermotex")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn thermotex")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("thermotex_cli_tests").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn digest_tree(dir: &Path) -> Vec<(String, u64)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            let mut hash = 0xcbf29ce484222325u64;
            for &b in &bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
            (p.file_name().unwrap().to_string_lossy().into_owned(), hash)
        })
        .collect()
}

#[test]
fn no_arguments_prints_usage_and_exits_one() {
    let out = Command::new(bin()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("USAGE"), "{stderr}");
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = tmp_dir("unknown_sub");
    let out = run_in(&dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tmp_dir("unknown_key");
    let out = run_in(&dir, &["synth", "--out", "d", "--set", "not_a_field=3"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not_a_field"), "{stderr}");
}

#[test]
fn synth_is_deterministic_across_runs() {
    let dir = tmp_dir("synth_det");
    for name in ["a", "b"] {
        let out = run_in(
            &dir,
            &[
                "synth", "--out", name, "--seed", "7", "--set", "views=2", "--set", "width=16",
                "--set", "height=16", "--set", "noise_sigma=2e-5",
            ],
        );
        assert!(out.status.success(), "{:?}", out);
    }
    assert_eq!(digest_tree(&dir.join("a")), digest_tree(&dir.join("b")));
}

#[test]
fn resolved_snapshot_reproduces_a_run() {
    let dir = tmp_dir("snapshot");
    let out = run_in(
        &dir,
        &[
            "synth", "--out", "first", "--seed", "3", "--set", "views=2", "--set", "width=16",
            "--set", "height=16",
        ],
    );
    assert!(out.status.success());
    // replay from the snapshot's config block alone
    let snapshot: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("first/resolved_config.json")).unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string(&snapshot["config"]).unwrap(),
    )
    .unwrap();
    let out = run_in(
        &dir,
        &["synth", "--out", "second", "--config", "config.json"],
    );
    assert!(out.status.success());
    let a: Vec<_> = digest_tree(&dir.join("first"))
        .into_iter()
        .filter(|(n, _)| n != "resolved_config.json")
        .collect();
    let b: Vec<_> = digest_tree(&dir.join("second"))
        .into_iter()
        .filter(|(n, _)| n != "resolved_config.json")
        .collect();
    assert_eq!(a, b);
}

#[test]
fn full_small_pipeline_runs() {
    let dir = tmp_dir("full_pipeline");
    let tiny_field = r#"field={"encoding":{"l_pos":2,"l_dir":1,"include_input":true},"trunk_layers":2,"trunk_width":8,"sv_hidden":4,"hue_tap":2,"density_scale":1.0}"#;
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "synth", "--out", "data", "--seed", "1", "--set", "views=9", "--set", "width=16",
            "--set", "height=16",
        ],
        vec!["decompose", "--set", "dataset=data", "--out", "data"],
        vec![
            "map", "--set", "dataset=data", "--set", "source=estimate", "--out", "data",
        ],
        vec![
            "train", "--out", "run", "--seed", "2", "--set", "dataset=data", "--set",
            "iterations=4", "--set", "batch_rays=32", "--set", "samples_per_ray=8", "--set",
            "log_every=2", "--set", tiny_field,
        ],
        vec![
            "render", "--out", "renders", "--set", "checkpoint=run/final.ckpt", "--set",
            "dataset=data", "--set", "views=holdout", "--set", "samples_per_ray=8",
        ],
        vec![
            "eval", "--out", "evalout", "--set", "checkpoint=run/final.ckpt", "--set",
            "dataset=data", "--set", "views=holdout", "--set", "samples_per_ray=8",
        ],
        vec![
            "pointcloud", "--out", "cloud", "--set", "checkpoint=run/final.ckpt", "--set",
            "resolution=6", "--set", "sigma_threshold=0.5",
        ],
    ];
    for step in steps {
        let out = run_in(&dir, &step);
        assert!(
            out.status.success(),
            "step {:?} failed:\n{}\n{}",
            step,
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(dir.join("run/final.ckpt").exists());
    assert!(dir.join("run/metrics.csv").exists());
    assert!(dir.join("renders/frame_007.render.pfm").exists());
    assert!(dir.join("evalout/eval_report.json").exists());
    assert!(dir.join("cloud/cloud.ply").exists());

    // metrics CSV has the documented header
    let metrics = std::fs::read_to_string(dir.join("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("iter,loss,loss_h,loss_s,loss_v,psnr_holdout\n"));
}

#[test]
fn train_determinism_through_the_binary() {
    let dir = tmp_dir("train_det");
    let out = run_in(
        &dir,
        &[
            "synth", "--out", "data", "--seed", "5", "--set", "views=9", "--set", "width=16",
            "--set", "height=16",
        ],
    );
    assert!(out.status.success());
    let tiny_field = r#"field={"encoding":{"l_pos":2,"l_dir":1,"include_input":true},"trunk_layers":2,"trunk_width":8,"sv_hidden":4,"hue_tap":2,"density_scale":1.0}"#;
    for name in ["r1", "r2"] {
        let out = run_in(
            &dir,
            &[
                "train", "--out", name, "--seed", "9", "--set", "dataset=data", "--set",
                "iterations=5", "--set", "batch_rays=32", "--set", "samples_per_ray=8",
                "--set", tiny_field,
            ],
        );
        assert!(out.status.success(), "{:?}", out);
    }
    assert_eq!(
        std::fs::read(dir.join("r1/final.ckpt")).unwrap(),
        std::fs::read(dir.join("r2/final.ckpt")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.join("r1/metrics.csv")).unwrap(),
        std::fs::read(dir.join("r2/metrics.csv")).unwrap()
    );
}
