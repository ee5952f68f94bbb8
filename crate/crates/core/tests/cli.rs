//! End-to-end runs of the `glareseg` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glareseg::dataset::{save_rgb_png, write_dataset};
use glareseg::imgrep::RgbImage;
use tempfile::TempDir;

fn glareseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glareseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = glareseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_CONFIG: &str = r#"{
  "dataset": {"resolution": {"height": 32, "width": 32}, "synthetic": {"seed": 1, "count": 4}},
  "model": {"depth": 1, "base_width": 2},
  "train": {"combo": "RGB+G", "steps": 3, "batch_size": 2, "folds": 2}
}"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, TINY_CONFIG).unwrap();
    p
}

fn sample_image(dir: &Path) -> PathBuf {
    let samples = common::corpus(1, 64);
    write_dataset(dir.join("data"), &samples).unwrap();
    dir.join("data/images/synth_0000.png")
}

fn read_f32(p: &Path) -> Vec<f32> {
    std::fs::read(p)
        .unwrap()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

#[test]
fn represent_writes_planes_and_intermediates_on_request() {
    let dir = TempDir::new().unwrap();
    let img = sample_image(dir.path());
    let plain = dir.path().join("plain");
    ok(&[
        "represent",
        "--input",
        s(&img),
        "--combo",
        "G",
        "--out",
        s(&plain),
    ]);
    assert!(plain.join("photometric.png").is_file());
    assert_eq!(read_f32(&plain.join("G.f32")).len(), 3 * 64 * 64);
    assert!(!plain.join("hue.png").exists());

    let full = dir.path().join("full");
    ok(&[
        "represent",
        "--input",
        s(&img),
        "--combo",
        "G",
        "--out",
        s(&full),
        "--keep-intermediates",
    ]);
    for name in ["hue", "saturation", "value", "luminance", "contrast"] {
        assert!(full.join(format!("{name}.png")).is_file(), "{name}");
    }
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(full.join("planes.json")).unwrap()).unwrap();
    assert_eq!(index["combo"], "G");
    assert_eq!(index["planes"]["G"]["channels"], 3);
}

#[test]
fn represent_stride_one_stays_within_interpolation_tolerance() {
    let dir = TempDir::new().unwrap();
    let img = sample_image(dir.path());
    let (dense, strided) = (dir.path().join("dense"), dir.path().join("strided"));
    ok(&[
        "represent",
        "--input",
        s(&img),
        "--combo",
        "RGB+HSV+G+C",
        "--out",
        s(&dense),
        "--stride",
        "1",
    ]);
    ok(&[
        "represent",
        "--input",
        s(&img),
        "--combo",
        "RGB+HSV+G+C",
        "--out",
        s(&strided),
    ]);
    let a = read_f32(&dense.join("C.f32"));
    let b = read_f32(&strided.join("C.f32"));
    assert_ne!(a, b);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0.0, f64::max);
    assert!(worst <= common::STRIDED_MAX_ABS, "{worst}");
    for name in ["rgb", "hsv_h", "hsv_s", "hsv_v", "photometric", "contrast"] {
        assert!(dense.join(format!("{name}.png")).is_file(), "{name}");
    }
}

#[test]
fn missing_input_is_a_usage_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.png");
    let out = glareseg(&[
        "represent",
        "--input",
        s(&missing),
        "--combo",
        "RGB",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.png"));
}

#[test]
fn bad_combo_and_bad_config_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = glareseg(&[
        "represent",
        "--input",
        "x.png",
        "--combo",
        "G+C",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"train": {"folds": 1}}"#).unwrap();
    let out = glareseg(&["--config", s(&cfg), "synth", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = glareseg(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_then_validate_then_oracle_eval() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("set");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--count",
        "3",
        "--resolution",
        "32",
        "--seed",
        "4",
    ]);
    assert_eq!(std::fs::read_dir(data.join("masks")).unwrap().count(), 3);
    let report = ok(&["validate-data", "--data", s(&data)]);
    assert!(report.contains("3 samples, 0 issues"), "{report}");

    let json = dir.path().join("eval.json");
    let table = ok(&[
        "eval",
        "--pred-dir",
        s(&data),
        "--truth-dir",
        s(&data),
        "--out",
        s(&json),
    ]);
    assert!(table.contains("F1"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for k in ["precision", "recall", "f1", "accuracy"] {
        assert_eq!(summary["mean"][k], 1.0, "{k}");
        assert_eq!(summary["std"][k], 0.0, "{k}");
    }
}

#[test]
fn validate_flags_orphans() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("set");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--count",
        "2",
        "--resolution",
        "16",
    ]);
    std::fs::remove_file(data.join("images/synth_0001.png")).unwrap();
    let out = glareseg(&["validate-data", "--data", s(&data)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth_0001"));
}

#[test]
fn train_predict_eval_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path());
    let (m1, m2) = (dir.path().join("a/model.ck"), dir.path().join("b/model.ck"));
    ok(&["--config", s(&cfg), "train", "--out", s(&m1)]);
    ok(&["--config", s(&cfg), "train", "--out", s(&m2)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let losses = std::fs::read_to_string(dir.path().join("a/model.loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 4);
    assert!(losses.starts_with("step,loss\n0,"));

    let black = dir.path().join("black.png");
    save_rgb_png(
        &black,
        &RgbImage::from_rgb8(48, 40, &vec![0; 48 * 40 * 3]).unwrap(),
    )
    .unwrap();
    let (p1, p2) = (dir.path().join("p1"), dir.path().join("p2"));
    ok(&[
        "predict",
        "--model",
        s(&m1),
        "--input",
        s(&black),
        "--out",
        s(&p1),
    ]);
    ok(&[
        "predict",
        "--model",
        s(&m1),
        "--input",
        s(&black),
        "--out",
        s(&p2),
    ]);
    for f in ["black_prob.png", "black_mask.png"] {
        assert_eq!(
            std::fs::read(p1.join(f)).unwrap(),
            std::fs::read(p2.join(f)).unwrap(),
            "{f}"
        );
    }

    let data = dir.path().join("set");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--count",
        "2",
        "--resolution",
        "32",
    ]);
    let json = dir.path().join("eval.json");
    let table = ok(&[
        "eval",
        "--model",
        s(&m1),
        "--data",
        s(&data),
        "--out",
        s(&json),
    ]);
    assert!(table.contains("images            2"), "{table}");
}

#[test]
fn ablate_subset_gives_single_column_report() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path());
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    ok(&[
        "--config",
        s(&cfg),
        "ablate",
        "--combos",
        "RGB+G",
        "--out",
        s(&o1),
        "--jobs",
        "1",
    ]);
    ok(&[
        "--config",
        s(&cfg),
        "ablate",
        "--combos",
        "RGB+G",
        "--out",
        s(&o2),
    ]);
    let csv = std::fs::read_to_string(o1.join("ablation.csv")).unwrap();
    assert!(csv.starts_with("Metric,RGB+G\n"));
    assert_eq!(csv.lines().count(), 9);
    for f in ["ablation.csv", "ablation.json", "ablation.md"] {
        assert_eq!(
            std::fs::read(o1.join(f)).unwrap(),
            std::fs::read(o2.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(o1.join("ablation.timing.json").is_file());
}
