//! Deterministic z-buffered software rasterization of a placed asset into a
//! camera view, producing the object image, object mask and asset depth.
//!
//! Conventions: pixel `(x, y)` is sampled at `(x + 0.5, y + 0.5)`; coverage
//! follows the top-left fill rule; depth is interpolated perspective-
//! correctly; the nearest surface wins and exact ties (within
//! [`DEPTH_TIE_TOL`]) go to the lower triangle index. Faces are two-sided
//! and flat-shaded with a Lambertian model.

use image::{Rgb, RgbImage};
use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image_buf::{Mask, Plane};
use crate::mesh::{AssetTransform, Mesh};
use crate::scene::Camera;

pub const NEAR_PLANE: f64 = 0.1;
pub const DEPTH_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    /// Unit vector in world coordinates, pointing from the light.
    pub direction: Vector3<f64>,
    pub ambient: f64,
    pub diffuse: f64,
}

impl DirectionalLight {
    pub fn new(direction: Vector3<f64>, ambient: f64, diffuse: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Domain("light direction must be non-zero".into()));
        }
        if !(0.0..=1.0).contains(&ambient) || !(0.0..=1.0).contains(&diffuse) {
            return Err(Error::Domain("ambient and diffuse must lie in [0, 1]".into()));
        }
        if ambient + diffuse > 1.0 + 1e-12 {
            return Err(Error::Domain("ambient + diffuse must be <= 1".into()));
        }
        Ok(Self {
            direction: direction / norm,
            ambient,
            diffuse,
        })
    }
}

impl Default for DirectionalLight {
    fn default() -> Self {
        Self {
            direction: Vector3::new(0.3, -0.5, -0.8).normalize(),
            ambient: 0.35,
            diffuse: 0.65,
        }
    }
}

/// `albedo * clamp(ambient + diffuse * max(0, n · -dir), 0, 1)`.
pub fn shade_lambert(normal: &Vector3<f64>, light: &DirectionalLight, albedo: [f64; 3]) -> [f64; 3] {
    let f = lambert_factor(normal, light);
    albedo.map(|a| a * f)
}

fn lambert_factor(normal: &Vector3<f64>, light: &DirectionalLight) -> f64 {
    let ndl = normal.dot(&(-light.direction)).max(0.0);
    (light.ambient + light.diffuse * ndl).clamp(0.0, 1.0)
}

/// Per-view rendering of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRender {
    pub color: RgbImage,
    pub mask: Mask,
    /// Camera-space depth in meters, `+inf` where the mask is empty.
    pub depth: Plane<f64>,
}

impl ObjectRender {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            color: RgbImage::new(width, height),
            mask: Mask::filled(width as usize, height as usize, false),
            depth: Plane::filled(width as usize, height as usize, f64::INFINITY),
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        self.color.dimensions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Number of row bands rasterized concurrently. Output does not depend
    /// on this value.
    pub workers: usize,
    pub near: f64,
    /// Rasterize triangles in a seeded random order instead of mesh
    /// order. Output does not depend on this either.
    pub shuffle_seed: Option<u64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            near: NEAR_PLANE,
            shuffle_seed: None,
        }
    }
}

pub fn render_asset(
    mesh: &Mesh,
    transform: &AssetTransform,
    camera: &Camera,
    frame: usize,
    light: &DirectionalLight,
) -> ObjectRender {
    render_asset_with(mesh, transform, camera, frame, light, &RenderOptions::default())
}

#[derive(Debug, Clone, Copy)]
struct ClipVert {
    p: Vector3<f64>,
    albedo: [f64; 3],
}

/// A screen-space triangle ready for scan conversion.
#[derive(Debug, Clone, Copy)]
struct ScreenTri {
    index: u32,
    xy: [[f64; 2]; 3],
    inv_z: [f64; 3],
    /// Albedo pre-divided by z for perspective-correct interpolation.
    albedo_over_z: [[f64; 3]; 3],
    shade: f64,
    area: f64,
    min_y: f64,
    max_y: f64,
}

pub fn render_asset_with(
    mesh: &Mesh,
    transform: &AssetTransform,
    camera: &Camera,
    frame: usize,
    light: &DirectionalLight,
    opts: &RenderOptions,
) -> ObjectRender {
    let mut tris = prepare_triangles(mesh, transform, camera, frame, light, opts.near);
    if let Some(seed) = opts.shuffle_seed {
        tris.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (w, h) = (camera.width as usize, camera.height as usize);
    let workers = opts.workers.clamp(1, h.max(1));

    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut ibuf = vec![u32::MAX; w * h];
    let mut cbuf = vec![[0.0f64; 3]; w * h];

    let rows_per = h.div_ceil(workers);
    std::thread::scope(|s| {
        let bands = zbuf
            .chunks_mut(rows_per * w)
            .zip(ibuf.chunks_mut(rows_per * w))
            .zip(cbuf.chunks_mut(rows_per * w))
            .enumerate();
        for (band, ((z, i), c)) in bands {
            let tris = &tris;
            let y0 = band * rows_per;
            let y1 = (y0 + rows_per).min(h);
            if workers == 1 {
                rasterize_band(tris, w, y0, y1, z, i, c);
            } else {
                s.spawn(move || rasterize_band(tris, w, y0, y1, z, i, c));
            }
        }
    });

    let mut out = ObjectRender::empty(camera.width, camera.height);
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if ibuf[k] != u32::MAX {
                out.mask.set(x, y, true);
                out.depth.set(x, y, zbuf[k]);
                out.color
                    .put_pixel(x as u32, y as u32, Rgb(cbuf[k].map(to_u8)));
            }
        }
    }
    out
}

#[inline]
fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn prepare_triangles(
    mesh: &Mesh,
    transform: &AssetTransform,
    camera: &Camera,
    frame: usize,
    light: &DirectionalLight,
    near: f64,
) -> Vec<ScreenTri> {
    let world: Vec<Point3<f64>> = mesh.vertices.iter().map(|v| transform.apply(v)).collect();
    let cam_center = camera.center(frame);
    let k = camera.intrinsics;
    let mut out = Vec::with_capacity(mesh.triangles.len());

    for (ti, t) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = t.map(|i| world[i as usize]);
        let cross = (b - a).cross(&(c - a));
        let len = cross.norm();
        if !(len > 0.0) {
            continue;
        }
        let mut n = cross / len;
        // Two-sided: shade the side facing the camera.
        if n.dot(&(cam_center - a)) < 0.0 {
            n = -n;
        }
        let shade = lambert_factor(&n, light);
        let albedo = match &mesh.vertex_colors {
            Some(vc) => t.map(|i| vc[i as usize]),
            None => [mesh.base_color; 3],
        };
        let poly: Vec<ClipVert> = t
            .iter()
            .zip(albedo)
            .map(|(&i, albedo)| ClipVert {
                p: camera.to_camera(frame, &world[i as usize]).coords,
                albedo,
            })
            .collect();
        let clipped = clip_near(&poly, near);
        if clipped.len() < 3 {
            continue;
        }
        let projected: Vec<([f64; 2], f64, [f64; 3])> = clipped
            .iter()
            .map(|v| {
                let iz = 1.0 / v.p.z;
                (
                    [k.fx * v.p.x * iz + k.cx, k.fy * v.p.y * iz + k.cy],
                    iz,
                    v.albedo.map(|c| c * iz),
                )
            })
            .collect();
        for j in 1..projected.len() - 1 {
            let mut idx = [0, j, j + 1];
            let mut area = edge(&projected[0].0, &projected[j].0, &projected[j + 1].0);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                idx.swap(1, 2);
                area = -area;
            }
            let xy = idx.map(|i| projected[i].0);
            out.push(ScreenTri {
                index: ti as u32,
                xy,
                inv_z: idx.map(|i| projected[i].1),
                albedo_over_z: idx.map(|i| projected[i].2),
                shade,
                area,
                min_y: xy.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
                max_y: xy.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    out
}

/// Sutherland-Hodgman against the plane `z = near`, keeping `z >= near`.
fn clip_near(poly: &[ClipVert], near: f64) -> Vec<ClipVert> {
    let mut out = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let cur_in = cur.p.z >= near;
        let next_in = next.p.z >= near;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (near - cur.p.z) / (next.p.z - cur.p.z);
            let albedo = std::array::from_fn(|c| cur.albedo[c] + t * (next.albedo[c] - cur.albedo[c]));
            let mut p = cur.p + t * (next.p - cur.p);
            p.z = near;
            out.push(ClipVert { p, albedo });
        }
    }
    out
}

/// Twice the signed area of `(a, b, p)`; positive when the screen-space
/// winding `a -> b -> p` is clockwise (y down).
#[inline]
fn edge(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// For a clockwise (positive-area) triangle: a top edge is horizontal and
/// runs to the right, a left edge runs upward.
#[inline]
fn is_top_left(a: &[f64; 2], b: &[f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn rasterize_band(
    tris: &[ScreenTri],
    width: usize,
    y0: usize,
    y1: usize,
    zbuf: &mut [f64],
    ibuf: &mut [u32],
    cbuf: &mut [[f64; 3]],
) {
    for t in tris {
        // Rows whose centers can fall inside the triangle.
        let ty0 = ((t.min_y - 0.5).ceil().max(y0 as f64)) as usize;
        let ty1f = (t.max_y - 0.5).floor();
        if ty1f < y0 as f64 {
            continue;
        }
        let ty1 = (ty1f as usize).min(y1.saturating_sub(1));
        if ty0 >= y1 || ty0 > ty1 {
            continue;
        }
        let min_x = t.xy.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = t.xy.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let tx0f = (min_x - 0.5).ceil().max(0.0);
        let tx1f = (max_x - 0.5).floor().min(width as f64 - 1.0);
        if tx1f < tx0f {
            continue;
        }
        let (tx0, tx1) = (tx0f as usize, tx1f as usize);
        let [v0, v1, v2] = t.xy;
        let tl = [
            is_top_left(&v1, &v2),
            is_top_left(&v2, &v0),
            is_top_left(&v0, &v1),
        ];
        for y in ty0..=ty1 {
            let py = y as f64 + 0.5;
            for x in tx0..=tx1 {
                let p = [x as f64 + 0.5, py];
                let w = [edge(&v1, &v2, &p), edge(&v2, &v0, &p), edge(&v0, &v1, &p)];
                let inside = w
                    .iter()
                    .zip(tl)
                    .all(|(&wi, top_left)| wi > 0.0 || (wi == 0.0 && top_left));
                if !inside {
                    continue;
                }
                let l = w.map(|wi| wi / t.area);
                let inv_z = l[0] * t.inv_z[0] + l[1] * t.inv_z[1] + l[2] * t.inv_z[2];
                let z = 1.0 / inv_z;
                let k = (y - y0) * width + x;
                let cur = zbuf[k];
                let wins = z < cur - DEPTH_TIE_TOL
                    || ((z - cur).abs() <= DEPTH_TIE_TOL && t.index < ibuf[k]);
                if !wins {
                    continue;
                }
                let mut color = [0.0; 3];
                for (c, out) in color.iter_mut().enumerate() {
                    let a = l[0] * t.albedo_over_z[0][c]
                        + l[1] * t.albedo_over_z[1][c]
                        + l[2] * t.albedo_over_z[2][c];
                    *out = a * z * t.shade;
                }
                zbuf[k] = z;
                ibuf[k] = t.index;
                cbuf[k] = color;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Intrinsics, Rigid};

    fn camera(fx: f64, size: u32) -> Camera {
        Camera::new(
            "cam",
            Intrinsics {
                fx,
                fy: fx,
                cx: size as f64 / 2.0,
                cy: size as f64 / 2.0,
            },
            size,
            size,
            vec![Rigid::identity()],
        )
    }

    /// Quad in the camera z = depth plane, given in camera coordinates
    /// (the test camera is the world frame).
    fn quad(x0: f64, y0: f64, side: f64, depth: f64) -> Mesh {
        Mesh::new(
            vec![
                Point3::new(x0, y0, depth),
                Point3::new(x0 + side, y0, depth),
                Point3::new(x0 + side, y0 + side, depth),
                Point3::new(x0, y0 + side, depth),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            [1.0, 0.5, 0.25],
        )
        .unwrap()
    }

    fn identity() -> AssetTransform {
        AssetTransform {
            scale: Vector3::repeat(1.0),
            rotation: 0.0,
            translation: Vector3::zeros(),
        }
    }

    #[test]
    fn shading_cases() {
        let light = DirectionalLight::new(Vector3::new(0.0, 0.0, -1.0), 0.2, 0.8).unwrap();
        let albedo = [0.5, 1.0, 0.25];
        assert_eq!(shade_lambert(&Vector3::new(0.0, 0.0, 1.0), &light, albedo), albedo);
        let side = shade_lambert(&Vector3::new(1.0, 0.0, 0.0), &light, albedo);
        for (s, a) in side.iter().zip(albedo) {
            assert!((s - 0.2 * a).abs() < 1e-15);
        }
        let sixty = Vector3::new((60f64).to_radians().sin(), 0.0, (60f64).to_radians().cos());
        let lit = shade_lambert(&sixty, &light, albedo);
        for (s, a) in lit.iter().zip(albedo) {
            assert!((s - 0.6 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn light_validation() {
        assert!(DirectionalLight::new(Vector3::zeros(), 0.2, 0.8).is_err());
        assert!(DirectionalLight::new(Vector3::x(), 0.5, 0.8).is_err());
        let l = DirectionalLight::default();
        assert!((l.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fronto_parallel_square_footprint() {
        let cam = camera(100.0, 100);
        let r = render_asset(&quad(-0.5, -0.5, 1.0, 10.0), &identity(), &cam, 0, &DirectionalLight::default());
        assert_eq!(r.mask.count(), 100);
        for y in 0..100 {
            for x in 0..100 {
                let inside = (45..55).contains(&x) && (45..55).contains(&y);
                assert_eq!(*r.mask.get(x, y), inside, "({x}, {y})");
                assert_eq!(r.depth.get(x, y).is_finite(), inside);
                if inside {
                    assert!((r.depth.get(x, y) - 10.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn behind_camera_is_empty() {
        let cam = camera(100.0, 100);
        let r = render_asset(&quad(-0.5, -0.5, 1.0, -10.0), &identity(), &cam, 0, &DirectionalLight::default());
        assert_eq!(r.mask.count(), 0);
        assert!(r.color.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn nearest_surface_wins() {
        let cam = camera(100.0, 100);
        let near = quad(-0.5, -0.5, 1.0, 5.0);
        let far = quad(-1.0, -1.0, 2.0, 10.0);
        let mut both = far.clone();
        let off = both.vertices.len() as u32;
        both.vertices.extend(near.vertices.iter().copied());
        both.triangles.extend(near.triangles.iter().map(|t| t.map(|i| i + off)));
        let r = render_asset(&both, &identity(), &cam, 0, &DirectionalLight::default());
        // Near quad covers 20x20 px centered; the far one 20x20 too
        // (same angular size), so the overlap is entirely at depth 5.
        for y in 0..100 {
            for x in 0..100 {
                if *r.mask.get(x, y) {
                    assert!((r.depth.get(x, y) - 5.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(r.mask.count(), 400);
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        let cam = camera(50.0, 100);
        // A floor quad running from behind the camera to 20 m ahead.
        let m = Mesh::new(
            vec![
                Point3::new(-2.0, 1.0, -5.0),
                Point3::new(2.0, 1.0, -5.0),
                Point3::new(2.0, 1.0, 20.0),
                Point3::new(-2.0, 1.0, 20.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            None,
            [1.0; 3],
        )
        .unwrap();
        let r = render_asset(&m, &identity(), &cam, 0, &DirectionalLight::default());
        assert!(r.mask.count() > 0);
        for (z, m) in r.depth.as_slice().iter().zip(r.mask.as_slice()) {
            if *m {
                assert!(*z >= NEAR_PLANE - 1e-12 && *z <= 20.0 + 1e-9);
            }
        }
    }

    #[test]
    fn shared_edge_covers_each_pixel_once() {
        // Two triangles of a quad whose diagonal passes through pixel
        // centers: every covered pixel is owned by exactly one triangle,
        // so the total equals the full-square count.
        let cam = camera(100.0, 100);
        let r = render_asset(&quad(-0.3, -0.3, 0.6, 1.0), &identity(), &cam, 0, &DirectionalLight::default());
        assert_eq!(r.mask.count(), 60 * 60);
    }

    #[test]
    fn vertex_colors_interpolate() {
        let cam = camera(100.0, 100);
        let mut m = quad(-0.5, -0.5, 1.0, 10.0);
        m.vertex_colors = Some(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        let light = DirectionalLight::new(Vector3::new(0.0, 0.0, 1.0), 0.0, 1.0).unwrap();
        let r = render_asset(&m, &identity(), &cam, 0, &light);
        let left = r.color.get_pixel(45, 50).0;
        let right = r.color.get_pixel(54, 50).0;
        assert!(left[0] > 200 && left[1] < 55, "{left:?}");
        assert!(right[1] > 200 && right[0] < 55, "{right:?}");
    }
}
