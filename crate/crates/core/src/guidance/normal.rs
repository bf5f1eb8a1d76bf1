use image::{Rgb, RgbImage};
use nalgebra::Vector3;

use crate::image_buf::Plane;
use crate::scene::{is_valid_depth, Intrinsics};

/// Encoding of the zero vector, used where no normal is defined.
pub const NULL_NORMAL: [u8; 3] = [128, 128, 128];

pub fn encode_normal(n: &Vector3<f64>) -> [u8; 3] {
    [n.x, n.y, n.z].map(|c| ((c + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Camera-space surface normals from metric depth.
///
/// Each pixel center is back-projected; tangents come from central
/// differences (one-sided on the image border) and the normal is their
/// cross product, oriented toward the camera: `n · P <= 0` for the
/// back-projected point `P`. Pixels whose own depth or any 4-neighbor
/// depth is invalid get [`NULL_NORMAL`].
pub fn depth_to_normal(depth: &Plane<f64>, k: &Intrinsics) -> RgbImage {
    let (w, h) = depth.dims();
    let mut out = RgbImage::from_pixel(w as u32, h as u32, Rgb(NULL_NORMAL));
    if w < 2 || h < 2 {
        return out;
    }
    let point = |x: usize, y: usize| {
        k.unproject(x as f64 + 0.5, y as f64 + 0.5, *depth.get(x, y))
    };
    let valid = |x: usize, y: usize| is_valid_depth(*depth.get(x, y));

    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            if !(valid(x, y) && valid(xl, y) && valid(xr, y) && valid(x, yu) && valid(x, yd)) {
                continue;
            }
            let tu = point(xr, y) - point(xl, y);
            let tv = point(x, yd) - point(x, yu);
            let n = tu.cross(&tv);
            let len = n.norm();
            if !(len > 0.0 && len.is_finite()) {
                continue;
            }
            let mut n = n / len;
            if n.dot(&point(x, y)) > 0.0 {
                n = -n;
            }
            out.put_pixel(x as u32, y as u32, Rgb(encode_normal(&n)));
        }
    }
    out
}

/// Decodes an 8-bit normal back to a unit vector (or zero for the null
/// encoding).
pub fn decode_normal(p: [u8; 3]) -> Vector3<f64> {
    if p == NULL_NORMAL {
        return Vector3::zeros();
    }
    let v = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0 * 2.0
        - Vector3::repeat(1.0);
    v.normalize()
}
