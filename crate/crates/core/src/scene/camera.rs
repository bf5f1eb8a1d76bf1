use nalgebra::{Point3, Vector3};

use super::rigid::Rigid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Row-major 3x3 `K`.
    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        [
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }

    /// Back-projects pixel coordinates at camera depth `z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Pixel coordinates and camera-space depth.
    Visible { u: f64, v: f64, z: f64 },
    /// The point lies on or behind the camera plane (`z_cam <= 0`).
    Behind,
}

impl Projection {
    pub fn visible(self) -> Option<(f64, f64, f64)> {
        match self {
            Projection::Visible { u, v, z } => Some((u, v, z)),
            Projection::Behind => None,
        }
    }
}

/// A pinhole camera with one camera-to-world pose per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
    extrinsics: Vec<Rigid>,
    world_to_cam: Vec<Rigid>,
}

impl Camera {
    /// Callers are responsible for validating the intrinsics; the bundle
    /// loader does so before constructing cameras.
    pub fn new(
        name: impl Into<String>,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
        extrinsics: Vec<Rigid>,
    ) -> Self {
        let world_to_cam = extrinsics.iter().map(Rigid::inverse).collect();
        Self {
            name: name.into(),
            intrinsics,
            width,
            height,
            extrinsics,
            world_to_cam,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.extrinsics.len()
    }

    /// Camera-to-world pose at `frame`.
    pub fn extrinsic(&self, frame: usize) -> &Rigid {
        &self.extrinsics[frame]
    }

    pub fn extrinsics(&self) -> &[Rigid] {
        &self.extrinsics
    }

    pub fn world_to_camera(&self, frame: usize) -> &Rigid {
        &self.world_to_cam[frame]
    }

    pub fn center(&self, frame: usize) -> Point3<f64> {
        Point3::from(self.extrinsics[frame].translation)
    }

    pub fn to_camera(&self, frame: usize, p_world: &Point3<f64>) -> Point3<f64> {
        self.world_to_cam[frame].transform_point(p_world)
    }

    /// Pinhole projection of a world point. Panics if `frame` is out of
    /// range.
    pub fn project_point(&self, frame: usize, p_world: &Point3<f64>) -> Projection {
        let p = self.to_camera(frame, p_world);
        if p.z <= 0.0 {
            return Projection::Behind;
        }
        let k = &self.intrinsics;
        Projection::Visible {
            u: k.fx * p.x / p.z + k.cx,
            v: k.fy * p.y / p.z + k.cy,
            z: p.z,
        }
    }

    /// Inverse of [`Camera::project_point`] for a known camera depth.
    pub fn unproject(&self, frame: usize, u: f64, v: f64, z_cam: f64) -> Point3<f64> {
        let p = self.intrinsics.unproject(u, v, z_cam);
        self.extrinsics[frame].transform_point(&Point3::from(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(extrinsic: Rigid) -> Camera {
        Camera::new(
            "front",
            Intrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 50.0,
                cy: 50.0,
            },
            100,
            100,
            vec![extrinsic],
        )
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let c = cam(Rigid::identity());
        assert_eq!(
            c.project_point(0, &Point3::new(0.0, 0.0, 5.0)),
            Projection::Visible {
                u: 50.0,
                v: 50.0,
                z: 5.0
            }
        );
    }

    #[test]
    fn off_axis_point() {
        let c = cam(Rigid::identity());
        let (u, v, z) = c
            .project_point(0, &Point3::new(1.0, 0.0, 10.0))
            .visible()
            .unwrap();
        assert!((u - 60.0).abs() < 1e-12);
        assert_eq!(v, 50.0);
        assert_eq!(z, 10.0);
    }

    #[test]
    fn behind_camera() {
        let c = cam(Rigid::identity());
        assert_eq!(
            c.project_point(0, &Point3::new(0.0, 0.0, -1.0)),
            Projection::Behind
        );
        assert_eq!(
            c.project_point(0, &Point3::new(1.0, 1.0, 0.0)),
            Projection::Behind
        );
    }

    #[test]
    fn random_rigid_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let axis = Unit::new_normalize(Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ));
            let r = Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
            let e = Rigid {
                rotation: r.into_inner(),
                translation: Vector3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-2.0..2.0),
                ),
            };
            let c = cam(e);
            let p_cam = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.5..60.0),
            );
            let p_world = e.transform_point(&Point3::from(p_cam));
            let (u, v, z) = c.project_point(0, &p_world).visible().unwrap();
            let back = c.unproject(0, u, v, z);
            assert!((back - p_world).norm() < 1e-9);
        }
    }
}
