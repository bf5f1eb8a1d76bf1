//! Procedural scenes for tests, benchmarks and the toy training set.
//!
//! The fixture is a straight road seen by a forward camera and a
//! front-left camera mounted on an ego vehicle driving along +x. Frames
//! are shaded analytically from the ground plane (asphalt, lane markings,
//! sky) and one parked car is rendered into both frames and depth.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Point3, Vector3};

use crate::compositor::{composite_naive, CompositeConfig};
use crate::error::Result;
use crate::image_buf::Plane;
use crate::mesh::{fit_mesh_to_box, FitMode, Mesh};
use crate::raster::{render_asset, DirectionalLight};
use crate::scene::{BBox3D, Camera, Category, Intrinsics, Rigid, SceneBundle, SceneMeta};

/// Depths beyond this are dropped, matching what fits in 16-bit mm PNGs.
const MAX_DEPTH: f64 = 65.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub width: u32,
    pub height: u32,
    pub num_frames: usize,
    pub fps: f64,
    /// Ego speed along +x, m/s.
    pub ego_speed: f64,
    pub with_depth: bool,
    pub parked_car: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 64,
            num_frames: 4,
            fps: 2.0,
            ego_speed: 2.0,
            with_depth: true,
            parked_car: true,
        }
    }
}

impl FixtureConfig {
    /// The 2-view, 4-frame, 32x32 configuration used for toy training.
    pub fn toy() -> Self {
        Self {
            width: 32,
            height: 32,
            ..Self::default()
        }
    }
}

/// Camera-to-world rotation for a level camera looking along `yaw`
/// (OpenCV axes: x right, y down, z forward).
pub fn level_camera_rotation(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    let forward = Vector3::new(c, s, 0.0);
    let right = Vector3::new(s, -c, 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    Matrix3::from_columns(&[right, down, forward])
}

fn fixture_cameras(cfg: &FixtureConfig) -> Vec<Camera> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    // ~90 degree horizontal field of view.
    let k = Intrinsics {
        fx: w / 2.0,
        fy: w / 2.0,
        cx: w / 2.0,
        cy: h / 2.0,
    };
    let mounts = [("front", 0.0f64, Vector3::new(1.5, 0.0, 1.6)), (
        "front_left",
        50f64.to_radians(),
        Vector3::new(1.3, 0.5, 1.6),
    )];
    mounts
        .iter()
        .map(|(name, yaw, offset)| {
            let poses = (0..cfg.num_frames)
                .map(|i| {
                    let ego_x = cfg.ego_speed * i as f64 / cfg.fps;
                    Rigid {
                        rotation: level_camera_rotation(*yaw),
                        translation: offset + Vector3::new(ego_x, 0.0, 0.0),
                    }
                })
                .collect();
            Camera::new(*name, k, cfg.width, cfg.height, poses)
        })
        .collect()
}

fn ground_color(p: &Point3<f64>) -> [u8; 3] {
    let lane = (p.y.abs() - 1.75).abs() < 0.12 && p.x.rem_euclid(6.0) < 3.0;
    let edge = (p.y.abs() - 5.2).abs() < 0.15;
    if lane || edge {
        return [235, 235, 225];
    }
    if p.y.abs() > 5.35 {
        // Verge.
        let g = 90 + ((p.x * 0.7).sin() * 12.0) as i32;
        return [60, g as u8, 45];
    }
    let t = ((p.x * 1.3).sin() * (p.y * 2.1).cos() * 6.0) as i32;
    let v = (88 + t) as u8;
    [v, v, v.saturating_add(4)]
}

fn sky_color(v: f64, height: f64) -> [u8; 3] {
    let t = (v / height).clamp(0.0, 1.0);
    [
        (120.0 + 60.0 * t) as u8,
        (160.0 + 50.0 * t) as u8,
        (220.0 + 20.0 * t) as u8,
    ]
}

fn background(cam: &Camera, frame: usize) -> (RgbImage, Plane<f64>) {
    let pose = cam.extrinsic(frame);
    let origin = Point3::from(pose.translation);
    let k = cam.intrinsics;
    let mut img = RgbImage::new(cam.width, cam.height);
    let mut depth = Plane::filled(cam.width as usize, cam.height as usize, 0.0);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = pose.transform_vector(&k.unproject(u, v, 1.0));
            let hit = (d.z < 0.0).then(|| -origin.z / d.z).filter(|&t| t <= MAX_DEPTH);
            match hit {
                Some(t) => {
                    img.put_pixel(x, y, Rgb(ground_color(&(origin + d * t))));
                    depth.set(x as usize, y as usize, t);
                }
                None => img.put_pixel(x, y, Rgb(sky_color(v, cam.height as f64))),
            }
        }
    }
    (img, depth)
}

pub fn parked_car_box() -> BBox3D {
    BBox3D {
        id: "parked_0".into(),
        category: Category::Car,
        center: [16.0, -3.6, 0.865],
        size: [1.95, 4.62, 1.73],
        yaw: 0.05,
    }
}

/// Builds the procedural two-camera scene.
pub fn two_camera_scene(cfg: &FixtureConfig) -> Result<SceneBundle> {
    let cameras = fixture_cameras(cfg);
    let parked = parked_car_box();
    let car = Mesh::toy_car(4.0, 1.8, 1.5).with_base_color([0.15, 0.25, 0.6]);
    let car_tf = fit_mesh_to_box(&car, &parked, FitMode::PerAxis)?;
    let light = DirectionalLight::default();
    let composite = CompositeConfig::default();

    let mut frames = Vec::new();
    let mut depths = Vec::new();
    for cam in &cameras {
        let mut cam_frames = Vec::new();
        let mut cam_depths = Vec::new();
        for f in 0..cfg.num_frames {
            let (mut img, mut depth) = background(cam, f);
            if cfg.parked_car {
                let r = render_asset(&car, &car_tf, cam, f, &light);
                img = composite_naive(&img, &r, Some(&depth), &composite)?;
                for y in 0..depth.height() {
                    for x in 0..depth.width() {
                        let z = *r.depth.get(x, y);
                        let s = *depth.get(x, y);
                        if *r.mask.get(x, y) && (s <= 0.0 || z < s) {
                            depth.set(x, y, z);
                        }
                    }
                }
            }
            // Round to whole millimeters so the in-memory scene equals a
            // saved-and-reloaded one.
            let depth = depth.map(|&z| (z * 1000.0).round() / 1000.0);
            cam_frames.push(img);
            cam_depths.push(depth);
        }
        frames.push(cam_frames);
        depths.push(cfg.with_depth.then_some(cam_depths));
    }

    let boxes = (0..cfg.num_frames)
        .map(|_| if cfg.parked_car { vec![parked.clone()] } else { Vec::new() })
        .collect();
    Ok(SceneBundle {
        meta: SceneMeta {
            scene_id: "fixture_two_camera".into(),
            num_frames: cfg.num_frames,
            fps: cfg.fps,
            cameras: cameras.iter().map(|c| c.name.clone()).collect(),
        },
        cameras,
        frames,
        boxes,
        scene_depth: depths,
    })
}

/// A scene with no frames content beyond a flat gray, a single forward
/// camera at the ego origin and no boxes.
pub fn empty_scene(width: u32, height: u32, num_frames: usize) -> SceneBundle {
    let k = Intrinsics {
        fx: width as f64 / 2.0,
        fy: width as f64 / 2.0,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
    };
    let pose = Rigid {
        rotation: level_camera_rotation(0.0),
        translation: Vector3::new(0.0, 0.0, 1.6),
    };
    let cam = Camera::new("front", k, width, height, vec![pose; num_frames]);
    SceneBundle {
        meta: SceneMeta {
            scene_id: "empty".into(),
            num_frames,
            fps: 2.0,
            cameras: vec!["front".into()],
        },
        cameras: vec![cam],
        frames: vec![vec![RgbImage::from_pixel(width, height, Rgb([100, 100, 100])); num_frames]],
        boxes: vec![Vec::new(); num_frames],
        scene_depth: vec![None],
    }
}

/// Four cameras (front, left, back, right) at the parked ego origin, flat
/// gray frames, no boxes and no depth. Every view bin is observable.
pub fn surround_scene(width: u32, height: u32, num_frames: usize) -> SceneBundle {
    let k = Intrinsics {
        fx: width as f64 / 2.0,
        fy: width as f64 / 2.0,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
    };
    let rig = [("front", 0.0f64), ("left", 90.0), ("back", 180.0), ("right", -90.0)];
    let cameras: Vec<Camera> = rig
        .iter()
        .map(|(name, yaw)| {
            let pose = Rigid {
                rotation: level_camera_rotation(yaw.to_radians()),
                translation: Vector3::new(0.0, 0.0, 1.6),
            };
            Camera::new(*name, k, width, height, vec![pose; num_frames])
        })
        .collect();
    let gray = RgbImage::from_pixel(width, height, Rgb([100, 100, 100]));
    SceneBundle {
        meta: SceneMeta {
            scene_id: "surround".into(),
            num_frames,
            fps: 2.0,
            cameras: rig.iter().map(|(n, _)| n.to_string()).collect(),
        },
        frames: vec![vec![gray; num_frames]; cameras.len()],
        scene_depth: vec![None; cameras.len()],
        cameras,
        boxes: vec![Vec::new(); num_frames],
    }
}
