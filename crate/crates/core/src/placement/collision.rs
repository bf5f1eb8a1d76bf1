use nalgebra::Vector2;

use super::Trajectory;
use crate::scene::{BBox3D, SceneBundle};

/// Oriented rectangle in the bird's-eye view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub center: Vector2<f64>,
    /// Half extents along the local (heading, lateral) axes.
    pub half: Vector2<f64>,
    pub yaw: f64,
}

impl Footprint {
    pub fn of_box(b: &BBox3D) -> Self {
        Self {
            center: Vector2::new(b.center[0], b.center[1]),
            half: Vector2::new(b.length() / 2.0, b.width() / 2.0),
            yaw: b.yaw,
        }
    }

    pub fn inflated(mut self, margin: f64) -> Self {
        self.half += Vector2::repeat(margin);
        self
    }

    pub fn axes(&self) -> [Vector2<f64>; 2] {
        let (s, c) = self.yaw.sin_cos();
        [Vector2::new(c, s), Vector2::new(-s, c)]
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let [ax, ay] = self.axes();
        let (hx, hy) = (ax * self.half.x, ay * self.half.y);
        [
            self.center + hx + hy,
            self.center - hx + hy,
            self.center - hx - hy,
            self.center + hx - hy,
        ]
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let d = p - self.center;
        let [ax, ay] = self.axes();
        d.dot(&ax).abs() <= self.half.x && d.dot(&ay).abs() <= self.half.y
    }

    /// Separating-axis test; touching rectangles overlap.
    pub fn overlaps(&self, other: &Footprint) -> bool {
        let a = self.corners();
        let b = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&a, &axis);
            let (bmin, bmax) = project(&b, &axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project(pts: &[Vector2<f64>; 4], axis: &Vector2<f64>) -> (f64, f64) {
    pts.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollisionReport {
    Clear,
    Collision { frame: usize, box_id: String },
}

impl CollisionReport {
    pub fn is_clear(&self) -> bool {
        matches!(self, CollisionReport::Clear)
    }
}

/// Checks every frame of the trajectory against the scene's boxes in the
/// same frame. The inserted footprint is inflated by `margin` meters on
/// each side.
pub fn check_collision(traj: &Trajectory, scene: &SceneBundle, margin: f64) -> CollisionReport {
    for (frame, ours) in traj.boxes.iter().enumerate() {
        let fp = Footprint::of_box(ours).inflated(margin);
        let Some(others) = scene.boxes.get(frame) else {
            continue;
        };
        for other in others {
            if fp.overlaps(&Footprint::of_box(other)) {
                return CollisionReport::Collision {
                    frame,
                    box_id: other.id.clone(),
                };
            }
        }
    }
    CollisionReport::Clear
}
