//! End-to-end checks of the `aura` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aura::harness::{self, SceneSpec};
use aura::importance::ImportanceMap;
use aura::pipeline;
use aura::{io, HoleMask};
use serde_json::Value;

fn scene_dir(tmp: &Path) -> PathBuf {
    let spec: SceneSpec = harness::suite()[0].clone();
    let scene = harness::make_scene(&spec).unwrap();
    let dir = tmp.join("scene");
    harness::write_scene(&scene, &dir).unwrap();
    dir
}

fn aura(args: &[&str], dir: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aura"))
        .args(args)
        .arg("--image")
        .arg(dir.join("input.png"))
        .arg("--mask")
        .arg(dir.join("seg_mask.pgm"))
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let out = tmp.path().join("out");
    let o = aura(&["generate", "--n-samples", "300"], &dir, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        pipeline::IMPORTANCE_GRID,
        pipeline::IMPORTANCE_HEATMAP,
        pipeline::IMPORTANCE_LEGEND,
        pipeline::SCORE_TABLE,
        pipeline::AURA_MASK,
        pipeline::COMPLETED,
        pipeline::REPORT,
        pipeline::RESOLVED_CONFIG,
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let report = json(out.join(pipeline::REPORT));
    let p_max = report["candidates"].as_array().unwrap().len();
    let masks = std::fs::read_dir(out.join(pipeline::CANDIDATE_DIR))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("candidate_"))
        .count();
    assert_eq!(masks, p_max);
    assert_eq!(report["selected_contains_target"], Value::Bool(true));

    let target = io::load_hole_mask(dir.join("seg_mask.pgm")).unwrap();
    let mask: HoleMask = io::load_hole_mask(out.join(pipeline::AURA_MASK)).unwrap();
    assert!(target.is_subset_of(&mask));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sampler": {"seed": 5, "n_samples": 200}, "lambda_a": 2.0}"#).unwrap();
    let out = tmp.path().join("out");
    let o = aura(
        &["importance", "--config", cfg.to_str().unwrap(), "--seed", "9"],
        &dir,
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = json(out.join(pipeline::RESOLVED_CONFIG));
    assert_eq!(resolved["sampler"]["seed"], 9);
    assert_eq!(resolved["sampler"]["n_samples"], 200);
    assert_eq!(resolved["lambda_a"], 2.0);
}

#[test]
fn importance_legend_matches_grid_and_seed_repeats() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let grids: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            let o = aura(&["importance", "--n-samples", "300", "--seed", "11"], &dir, &out);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            let map: ImportanceMap<f64> = ImportanceMap::read_binary(out.join(pipeline::IMPORTANCE_GRID)).unwrap();
            let legend = json(out.join(pipeline::IMPORTANCE_LEGEND));
            let lo = map.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // the grid stores single precision
            assert_eq!(legend["min"].as_f64().unwrap() as f32 as f64, lo);
            assert_eq!(legend["max"].as_f64().unwrap() as f32 as f64, hi);
            std::fs::read(out.join(pipeline::IMPORTANCE_GRID)).unwrap()
        })
        .collect();
    assert_eq!(grids[0], grids[1]);
}

#[test]
fn more_samples_shrink_estimator_variance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let variance = |n: &str| {
        let out = tmp.path().join(n);
        let o = aura(&["generate", "--n-samples", n, "--p-max", "2"], &dir, &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        json(out.join(pipeline::REPORT))["mean_estimator_variance"].as_f64().unwrap()
    };
    assert!(variance("500") > variance("2000"));
}

#[test]
fn judge_of_bare_target_on_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let out = tmp.path().join("out");
    let o = aura(&["judge", "--inpainter", "mean", "--metric", "l2"], &dir, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let score = json(out.join("judge.json"));
    assert_eq!(score["afterimage"].as_f64().unwrap(), 0.0);
    assert_eq!(score["detect"].as_f64().unwrap(), 0.0);
    assert!(score["total"].as_f64().unwrap() <= 0.0);
}

#[test]
fn empty_target_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let empty = HoleMask::from_fn(64, 64, |_, _| false);
    io::save_hole_mask(&empty, dir.join("seg_mask.pgm")).unwrap();
    let o = aura(&["generate"], &dir, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no removal target"));
}

#[test]
fn mismatched_mask_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let small = HoleMask::from_fn(32, 32, |y, x| y < 4 && x < 4);
    io::save_hole_mask(&small, dir.join("seg_mask.pgm")).unwrap();
    let o = aura(&["generate"], &dir, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_p_max_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let o = aura(&["generate", "--p-max", "0"], &dir, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn failing_external_inpainter_is_an_oracle_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scene_dir(tmp.path());
    let o = aura(
        &["generate", "--n-samples", "50", "--inpainter", "external:false"],
        &dir,
        &tmp.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_on_one_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    let o = Command::new(env!("CARGO_BIN_EXE_aura"))
        .args(["bench", "--scenes", "1", "--seeds", "1", "--out"])
        .arg(&out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    // header, five kernels, the true mask and one AURA row
    assert_eq!(csv.lines().count(), 1 + harness::DEFAULT_KERNELS.len() + 2);
    assert!(out.join("dominance.json").is_file());
}
