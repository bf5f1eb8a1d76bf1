use nalgebra::Point3;

use crate::image_buf::{Mask, Plane};
use crate::scene::{is_valid_depth, Camera};

/// Encodes inverse depth into 8 bits: over the valid pixels of the frame,
/// the nearest maps to 255 and the farthest to 1; invalid pixels are 0.
/// A frame with a single distinct depth maps every valid pixel to 255.
pub fn normalize_depth(depth: &Plane<f64>, valid: &Mask) -> Plane<u8> {
    assert_eq!(depth.dims(), valid.dims(), "depth and validity must align");
    let inv: Vec<Option<f64>> = depth
        .as_slice()
        .iter()
        .zip(valid.as_slice())
        .map(|(&z, &ok)| (ok && is_valid_depth(z)).then(|| 1.0 / z))
        .collect();
    let (lo, hi) = inv
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| {
            (lo.min(q), hi.max(q))
        });
    let data = inv
        .iter()
        .map(|q| match q {
            None => 0,
            Some(_) if hi <= lo => 255,
            Some(q) => (1.0 + (q - lo) / (hi - lo) * 254.0).round().clamp(1.0, 255.0) as u8,
        })
        .collect();
    Plane::from_vec(depth.width(), depth.height(), data).expect("same dimensions")
}

pub fn valid_mask(depth: &Plane<f64>) -> Mask {
    depth.map(|&z| is_valid_depth(z))
}

/// Camera depth of the world ground plane `z = 0` through each pixel
/// center. Rays that never reach the ground (sky) get depth 0, i.e.
/// unknown.
pub fn flat_ground_depth(camera: &Camera, frame: usize) -> Plane<f64> {
    let pose = camera.extrinsic(frame);
    let origin = Point3::from(pose.translation);
    let k = camera.intrinsics;
    Plane::from_fn(camera.width as usize, camera.height as usize, |x, y| {
        let ray = k.unproject(x as f64 + 0.5, y as f64 + 0.5, 1.0);
        let d = pose.transform_vector(&ray);
        if origin.z > 0.0 && d.z < 0.0 {
            // ray has unit camera-z, so the ray parameter is the depth.
            -origin.z / d.z
        } else {
            0.0
        }
    })
}
