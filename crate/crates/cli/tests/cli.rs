use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sceneforge_core::fixture::{two_camera_scene, FixtureConfig};
use sceneforge_core::rfdit::codec::{signed_to_rgb, Latent};
use sceneforge_core::rfdit::{ToyModel, TrainConfig};
use sceneforge_core::scene::save_scene_bundle;

const FEASIBLE: &str = r#"{"category": "car", "view": "front", "distance": "mid", "speed": 2.0, "seed": 1}"#;
const INFEASIBLE: &str = r#"{"category": "bus", "view": "back", "distance": "far", "speed": 0.0, "seed": 2}"#;

fn sceneforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sceneforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn edit_config(dir: &Path, placements: &[&str]) -> PathBuf {
    let scene = dir.join("scene");
    save_scene_bundle(&two_camera_scene(&FixtureConfig::default()).unwrap(), &scene).unwrap();
    let path = dir.join("config.json");
    let text = format!(r#"{{"scene": "scene", "placements": [{}]}}"#, placements.join(", "));
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn edit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let cfg = edit_config(dir.path(), &[FEASIBLE, INFEASIBLE]);
    let r = sceneforge(&["edit", "--config", s(&cfg), "--out", s(&out), "--workers", "2"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("insert_0/frames_edited/front/0000.png").is_file());
    assert!(out.join("report.json").is_file());

    let cfg = edit_config(dir.path(), &[INFEASIBLE]);
    let r = sceneforge(&["edit", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));

    let r = sceneforge(&["edit"]);
    assert_eq!(r.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"scene": "scene", "placements": [], "extra": 1}"#).unwrap();
    let r = sceneforge(&["edit", "--config", s(&cfg)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("extra"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edit_config(dir.path(), &[FEASIBLE]);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let r = sceneforge(&["place", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        assert_eq!(r.status.code(), Some(0));
        std::fs::read(out.join("insert_0/boxes.json")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}

#[test]
fn zero_field_sample_is_decoded_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let r = sceneforge(&["toy", "sample", "--zero-field", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));

    let cfg = TrainConfig::default();
    let model = ToyModel::new(cfg.model.clone(), cfg.seed).unwrap();
    let noise = Latent::seeded_normal(model.config.latent_shape(2), cfg.noise_seed(0));
    let images = model.codec.decode(&noise).unwrap();
    for (v, frames) in images.iter().enumerate() {
        for (f, img) in frames.iter().enumerate() {
            let path = out.join(format!("samples/view_{v}/{f:04}.png"));
            let written = image::open(&path).unwrap().to_rgb8();
            assert_eq!(written, signed_to_rgb(img), "{}", path.display());
        }
    }
}

#[test]
fn sample_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let r = sceneforge(&["toy", "sample", "--checkpoint", s(&missing), "--out", s(dir.path())]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope.bin"));
    let r = sceneforge(&["toy", "sample", "--out", s(dir.path())]);
    assert_ne!(r.status.code(), Some(0));
}

#[test]
fn short_training_run_writes_checkpoint_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let r = sceneforge(&["toy", "train", "--steps", "3", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("step,"));
    assert!(out.join("checkpoint.bin").is_file());

    let samples = dir.path().join("samples");
    let ckpt = out.join("checkpoint.bin");
    let r = sceneforge(&["toy", "sample", "--checkpoint", s(&ckpt), "--steps", "2", "--out", s(&samples)]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(samples.join("samples/view_1/0000.png").is_file());
}
