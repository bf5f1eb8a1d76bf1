use nalgebra::Vector2;

use super::Trajectory;
use crate::raster::NEAR_PLANE;
use crate::scene::{box_corners, BBox3D, Camera, SceneBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityReport {
    pub visible: bool,
    /// Frames where at least one camera sees `min_pixels` of hull area.
    pub frames_visible: usize,
    /// Largest hull area over cameras, per frame.
    pub best_area: Vec<f64>,
}

/// Area in pixels of the convex hull of the box's projected corners,
/// clipped to the image. Zero if any corner is closer than the near plane.
pub fn projected_hull_area(b: &BBox3D, camera: &Camera, frame: usize) -> f64 {
    let mut pts = Vec::with_capacity(8);
    for c in box_corners(b) {
        let p = camera.to_camera(frame, &c);
        if p.z <= NEAR_PLANE {
            return 0.0;
        }
        let k = &camera.intrinsics;
        pts.push(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy));
    }
    let hull = convex_hull(pts);
    let clipped = clip_to_rect(&hull, camera.width as f64, camera.height as f64);
    polygon_area(&clipped)
}

/// Visible iff at least `min_frames` frames have some camera with hull
/// area `>= min_pixels`.
pub fn check_visibility(
    traj: &Trajectory,
    scene: &SceneBundle,
    min_pixels: f64,
    min_frames: usize,
) -> VisibilityReport {
    let best_area: Vec<f64> = traj
        .boxes
        .iter()
        .enumerate()
        .map(|(frame, b)| {
            scene
                .cameras
                .iter()
                .map(|cam| projected_hull_area(b, cam, frame))
                .fold(0.0, f64::max)
        })
        .collect();
    let frames_visible = best_area.iter().filter(|&&a| a >= min_pixels).count();
    VisibilityReport {
        visible: frames_visible >= min_frames,
        frames_visible,
        best_area,
    }
}

/// Andrew's monotone chain; counter-clockwise in a y-up sense.
fn convex_hull(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

fn clip_to_rect(poly: &[Vector2<f64>], w: f64, h: f64) -> Vec<Vector2<f64>> {
    // (normal axis, sign, bound): keep points with sign * coord <= bound.
    let planes = [(0usize, -1.0, 0.0), (0, 1.0, w), (1, -1.0, 0.0), (1, 1.0, h)];
    let mut out = poly.to_vec();
    for (axis, sign, bound) in planes {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let inside = |p: &Vector2<f64>| sign * p[axis] <= sign * bound;
        for i in 0..input.len() {
            let cur = input[i];
            let next = input[(i + 1) % input.len()];
            if inside(&cur) {
                out.push(cur);
            }
            if inside(&cur) != inside(&next) {
                let t = (bound - cur[axis]) / (next[axis] - cur[axis]);
                out.push(cur + (next - cur) * t);
            }
        }
    }
    out
}

fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice.abs() / 2.0
}
