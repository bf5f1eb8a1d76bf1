#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneforge_core::fixture::{two_camera_scene, FixtureConfig};
use sceneforge_core::placement::Footprint;
use sceneforge_core::scene::save_scene_bundle;
use sceneforge_core::{Mask, Plane};

/// Straightforward Canny: per-pixel convolutions read straight from the
/// image, float magnitudes, `atan2` direction bins and a depth-first
/// hysteresis walk.
pub fn canny_reference(gray: &Plane<u8>, low: f64, high: f64) -> Mask {
    const K: [[i64; 5]; 5] = [
        [2, 4, 5, 4, 2],
        [4, 9, 12, 9, 4],
        [5, 12, 15, 12, 5],
        [4, 9, 12, 9, 4],
        [2, 4, 5, 4, 2],
    ];
    let (w, h) = gray.dims();
    let px = |x: i64, y: i64| *gray.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize) as i64;
    let blurred = |x: i64, y: i64| -> i64 {
        let (x, y) = (x.clamp(0, w as i64 - 1), y.clamp(0, h as i64 - 1));
        let mut s = 0;
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                s += K[(dy + 2) as usize][(dx + 2) as usize] * px(x + dx, y + dy);
            }
        }
        s
    };
    let grad = |x: i64, y: i64| -> (i64, i64) {
        let b = |dx: i64, dy: i64| blurred(x + dx, y + dy);
        let gx = b(1, -1) + 2 * b(1, 0) + b(1, 1) - b(-1, -1) - 2 * b(-1, 0) - b(-1, 1);
        let gy = b(-1, 1) + 2 * b(0, 1) + b(1, 1) - b(-1, -1) - 2 * b(0, -1) - b(1, -1);
        (gx, gy)
    };

    let mut mag = vec![0.0f64; w * h];
    let mut bin = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = grad(x as i64, y as i64);
            mag[y * w + x] = ((gx * gx + gy * gy) as f64).sqrt() / 159.0;
            let mut deg = (gy as f64).atan2(gx as f64).to_degrees();
            if deg < 0.0 {
                deg += 180.0;
            }
            bin[y * w + x] = if !(22.5..157.5).contains(&deg) {
                0
            } else if deg < 67.5 {
                1
            } else if deg < 112.5 {
                2
            } else {
                3
            };
        }
    }
    let m = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    let mut cls = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v == 0.0 {
                continue;
            }
            let (dx, dy) = [(1, 0), (1, 1), (0, 1), (-1, 1)][bin[i] as usize];
            if !(v >= m(x + dx, y + dy) && v > m(x - dx, y - dy)) {
                continue;
            }
            cls[i] = if v >= high {
                2
            } else if v >= low {
                1
            } else {
                0
            };
        }
    }

    let mut out = Mask::filled(w, h, false);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if cls[y * w + x] == 2 && !*out.get(x, y) {
                stack.push((x, y));
                out.set(x, y, true);
                while let Some((cx, cy)) = stack.pop() {
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            if cls[ny * w + nx] >= 1 && !*out.get(nx, ny) {
                                out.set(nx, ny, true);
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Smooth blobs plus noise, so there are both long contours and clutter.
pub fn random_gray(seed: u64, w: usize, h: usize) -> Plane<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(3.0..14.0),
                rng.random_range(-120.0..120.0),
            )
        })
        .collect();
    let noise = rng.random_range(0.0..60.0);
    Plane::from_fn(w, h, |x, y| {
        let mut v = 128.0;
        for &(cx, cy, r, a) in &blobs {
            if (x as f64 - cx).hypot(y as f64 - cy) < r {
                v += a;
            }
        }
        v += rng.random_range(-noise..=noise);
        v.round().clamp(0.0, 255.0) as u8
    })
}

/// Vertical step 0 | 255 at column `w / 2`.
pub fn step_edge(w: usize, h: usize) -> Plane<u8> {
    Plane::from_fn(w, h, |x, _| if x < w / 2 { 0 } else { 255 })
}

/// Overlap by sampling a 100 x 100 grid (boundary included) over each
/// rectangle and testing membership in the other.
pub fn overlap_by_sampling(a: &Footprint, b: &Footprint) -> bool {
    let hits = |p: &Footprint, q: &Footprint| {
        let [ax, ay] = p.axes();
        (0..100).any(|i| {
            (0..100).any(|j| {
                let u = -1.0 + 2.0 * i as f64 / 99.0;
                let v = -1.0 + 2.0 * j as f64 / 99.0;
                let pt: Vector2<f64> = p.center + ax * (u * p.half.x) + ay * (v * p.half.y);
                q.contains(&pt)
            })
        })
    };
    hits(a, b) || hits(b, a)
}

/// Every regular file under `root`, keyed by its `/`-joined relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap();
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Saves the default two-camera fixture under `dir/scene` and returns the
/// bundle path.
pub fn write_fixture_bundle(dir: &Path) -> PathBuf {
    let scene = dir.join("scene");
    save_scene_bundle(&two_camera_scene(&FixtureConfig::default()).unwrap(), &scene).unwrap();
    scene
}

/// Writes an `edit` config over the fixture bundle with the given
/// placement specs (JSON objects) and returns the config path.
pub fn write_config(dir: &Path, scene: &Path, placements: &str, out: &Path, workers: usize) -> PathBuf {
    let text = format!(
        r#"{{
  "scene": {scene:?},
  "placements": {placements},
  "out": {out:?},
  "workers": {workers},
  "seed": 17
}}"#
    );
    let path = dir.join(format!("config_{workers}.json"));
    std::fs::write(&path, text).unwrap();
    path
}

pub const FEASIBLE: &str = r#"{"category": "car", "view": "front", "distance": "mid", "speed": 2.0, "seed": 1}"#;
pub const INFEASIBLE: &str = r#"{"category": "bus", "view": "back", "distance": "far", "speed": 0.0, "seed": 2}"#;
