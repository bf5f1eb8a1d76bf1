//! On-disk scene bundle:
//!
//! ```text
//! meta.json                 {"scene_id", "num_frames", "fps", "cameras": [..]}
//! cameras/<name>.json       {"intrinsics": 3x3, "width", "height", "extrinsics": [4x4; T]}
//! frames/<name>/%04d.png    8-bit RGB
//! depth/<name>/%04d.png     optional 16-bit gray, millimeters, 0 = unknown
//! boxes.json                {"frames": [[box, ..]; T]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::bbox::BBox3D;
use super::camera::{Camera, Intrinsics};
use super::rigid::Rigid;
use crate::error::{Error, Result};
use crate::image_buf::{save_png, Plane};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub scene_id: String,
    pub num_frames: usize,
    pub fps: f64,
    pub cameras: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraFile {
    intrinsics: [[f64; 3]; 3],
    width: u32,
    height: u32,
    extrinsics: Vec<[[f64; 4]; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct BoxesFile {
    pub frames: Vec<Vec<BBox3D>>,
}

/// A multi-camera sequence. Frames, boxes and depth are indexed
/// `[camera][frame]` / `[frame]` / `[camera][frame]`.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub meta: SceneMeta,
    pub cameras: Vec<Camera>,
    pub frames: Vec<Vec<RgbImage>>,
    pub boxes: Vec<Vec<BBox3D>>,
    /// Metric depth per camera; `None` when the bundle ships no depth
    /// for that camera. Non-positive values mark unknown depth.
    pub scene_depth: Vec<Option<Vec<Plane<f64>>>>,
}

impl SceneBundle {
    pub fn num_frames(&self) -> usize {
        self.meta.num_frames
    }

    pub fn camera_index(&self, name: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.name == name)
    }

    pub fn depth(&self, camera: usize, frame: usize) -> Option<&Plane<f64>> {
        self.scene_depth
            .get(camera)
            .and_then(|d| d.as_ref())
            .map(|d| &d[frame])
    }

    /// Checks every bundle invariant; `root` is only used for messages.
    pub fn validate(&self, root: &Path) -> Result<()> {
        let t = self.meta.num_frames;
        if t == 0 {
            return Err(Error::invalid(root.join("meta.json"), "num_frames", "must be >= 1"));
        }
        if !(self.meta.fps.is_finite() && self.meta.fps > 0.0) {
            return Err(Error::invalid(root.join("meta.json"), "fps", "must be > 0"));
        }
        if self.cameras.len() != self.meta.cameras.len() || self.frames.len() != self.cameras.len()
        {
            return Err(Error::invalid(
                root.join("meta.json"),
                "cameras",
                "camera count does not match loaded data",
            ));
        }
        for (ci, cam) in self.cameras.iter().enumerate() {
            let cam_path = root.join("cameras").join(format!("{}.json", cam.name));
            validate_intrinsics(&cam.intrinsics, cam.width, cam.height, &cam_path)?;
            if cam.num_frames() != t {
                return Err(Error::invalid(
                    &cam_path,
                    "extrinsics",
                    format!(
                        "extrinsics length mismatch: {} poses for {} frames",
                        cam.num_frames(),
                        t
                    ),
                ));
            }
            if self.frames[ci].len() != t {
                return Err(Error::invalid(
                    root.join("frames").join(&cam.name),
                    "frames",
                    format!("expected {t} frames, found {}", self.frames[ci].len()),
                ));
            }
            for (fi, img) in self.frames[ci].iter().enumerate() {
                if img.dimensions() != (cam.width, cam.height) {
                    return Err(Error::invalid(
                        frame_path(root, &cam.name, fi),
                        "dimensions",
                        format!(
                            "image is {}x{}, camera expects {}x{}",
                            img.width(),
                            img.height(),
                            cam.width,
                            cam.height
                        ),
                    ));
                }
            }
            if let Some(Some(depth)) = self.scene_depth.get(ci) {
                if depth.len() != t {
                    return Err(Error::invalid(
                        root.join("depth").join(&cam.name),
                        "frames",
                        format!("expected {t} depth maps, found {}", depth.len()),
                    ));
                }
                for (fi, d) in depth.iter().enumerate() {
                    if d.dims() != (cam.width as usize, cam.height as usize) {
                        return Err(Error::invalid(
                            depth_path(root, &cam.name, fi),
                            "dimensions",
                            "depth map size differs from camera",
                        ));
                    }
                }
            }
        }
        if self.boxes.len() > t {
            return Err(Error::invalid(
                root.join("boxes.json"),
                "frames",
                format!("{} box frames for {} scene frames", self.boxes.len(), t),
            ));
        }
        for (fi, frame) in self.boxes.iter().enumerate() {
            for b in frame {
                b.validate().map_err(|e| {
                    Error::invalid(root.join("boxes.json"), format!("frames[{fi}]"), e.to_string())
                })?;
            }
        }
        Ok(())
    }
}

fn validate_intrinsics(k: &Intrinsics, width: u32, height: u32, path: &Path) -> Result<()> {
    if !(k.fx > 0.0 && k.fy > 0.0) {
        return Err(Error::invalid(path, "intrinsics", "fx and fy must be > 0"));
    }
    if !(k.cx > 0.0 && k.cx < width as f64 && k.cy > 0.0 && k.cy < height as f64) {
        return Err(Error::invalid(
            path,
            "intrinsics",
            "principal point must lie inside the image",
        ));
    }
    Ok(())
}

fn frame_path(root: &Path, cam: &str, frame: usize) -> PathBuf {
    root.join("frames").join(cam).join(format!("{frame:04}.png"))
}

fn depth_path(root: &Path, cam: &str, frame: usize) -> PathBuf {
    root.join("depth").join(cam).join(format!("{frame:04}.png"))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })
}

fn load_camera(root: &Path, name: &str) -> Result<Camera> {
    let path = root.join("cameras").join(format!("{name}.json"));
    let file: CameraFile = read_json(&path)?;
    let k = file.intrinsics;
    if k[1][0] != 0.0 || k[0][1] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
        return Err(Error::invalid(
            &path,
            "intrinsics",
            "expected [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]",
        ));
    }
    let intrinsics = Intrinsics {
        fx: k[0][0],
        fy: k[1][1],
        cx: k[0][2],
        cy: k[1][2],
    };
    validate_intrinsics(&intrinsics, file.width, file.height, &path)?;
    let extrinsics = file
        .extrinsics
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            let m = Matrix4::from_fn(|r, c| rows[r][c]);
            Rigid::from_matrix(&m).map_err(|e| {
                Error::invalid(&path, format!("extrinsics[{i}]"), format!("invalid rotation: {e}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Camera::new(name, intrinsics, file.width, file.height, extrinsics))
}

/// Loads and fully validates a scene bundle directory.
pub fn load_scene_bundle(root: impl AsRef<Path>) -> Result<SceneBundle> {
    let root = root.as_ref();
    let meta: SceneMeta = read_json(&root.join("meta.json"))?;
    let t = meta.num_frames;

    let mut cameras = Vec::with_capacity(meta.cameras.len());
    let mut frames = Vec::with_capacity(meta.cameras.len());
    let mut scene_depth = Vec::with_capacity(meta.cameras.len());
    for name in &meta.cameras {
        let cam = load_camera(root, name)?;
        if cam.num_frames() != t {
            return Err(Error::invalid(
                root.join("cameras").join(format!("{name}.json")),
                "extrinsics",
                format!(
                    "extrinsics length mismatch: {} poses for {} frames",
                    cam.num_frames(),
                    t
                ),
            ));
        }
        let mut imgs = Vec::with_capacity(t);
        for fi in 0..t {
            let path = frame_path(root, name, fi);
            imgs.push(load_image(&path)?.to_rgb8());
        }
        let depth_dir = root.join("depth").join(name);
        let depth = if depth_dir.is_dir() {
            let mut maps = Vec::with_capacity(t);
            for fi in 0..t {
                let path = depth_path(root, name, fi);
                let img = load_image(&path)?.to_luma16();
                let (w, h) = img.dimensions();
                let data = img.as_raw().iter().map(|&mm| mm as f64 / 1000.0).collect();
                maps.push(Plane::from_vec(w as usize, h as usize, data)?);
            }
            Some(maps)
        } else {
            None
        };
        cameras.push(cam);
        frames.push(imgs);
        scene_depth.push(depth);
    }

    let boxes_path = root.join("boxes.json");
    let mut boxes = read_json::<BoxesFile>(&boxes_path)?.frames;
    if boxes.len() < t {
        boxes.resize(t, Vec::new());
    }

    let bundle = SceneBundle {
        meta,
        cameras,
        frames,
        boxes,
        scene_depth,
    };
    bundle.validate(root)?;
    Ok(bundle)
}

/// Writes a bundle in the layout read by [`load_scene_bundle`]. Depth is
/// quantized to whole millimeters.
pub fn save_scene_bundle(bundle: &SceneBundle, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    bundle.validate(root)?;
    write_json(&root.join("meta.json"), &bundle.meta)?;
    for (ci, cam) in bundle.cameras.iter().enumerate() {
        let file = CameraFile {
            intrinsics: cam.intrinsics.to_rows(),
            width: cam.width,
            height: cam.height,
            extrinsics: cam
                .extrinsics()
                .iter()
                .map(|e| {
                    let m = e.to_matrix();
                    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
                })
                .collect(),
        };
        write_json(&root.join("cameras").join(format!("{}.json", cam.name)), &file)?;
        for (fi, img) in bundle.frames[ci].iter().enumerate() {
            save_png(img, &frame_path(root, &cam.name, fi))?;
        }
        if let Some(Some(depth)) = bundle.scene_depth.get(ci) {
            for (fi, d) in depth.iter().enumerate() {
                let img: ImageBuffer<Luma<u16>, Vec<u16>> =
                    ImageBuffer::from_fn(d.width() as u32, d.height() as u32, |x, y| {
                        let z = *d.get(x as usize, y as usize);
                        let mm = if super::is_valid_depth(z) {
                            (z * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16
                        } else {
                            0
                        };
                        Luma([mm])
                    });
                save_png(&img, &depth_path(root, &cam.name, fi))?;
            }
        }
    }
    write_json(
        &root.join("boxes.json"),
        &BoxesFile {
            frames: bundle.boxes.clone(),
        },
    )
}
