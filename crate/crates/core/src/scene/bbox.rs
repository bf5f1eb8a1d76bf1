use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::rigid::Rigid;
use crate::error::{Error, Result};

/// The ten nuScenes detection classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Car,
    Truck,
    Bus,
    Trailer,
    ConstructionVehicle,
    Pedestrian,
    Motorcycle,
    Bicycle,
    TrafficCone,
    Barrier,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Trailer,
        Category::ConstructionVehicle,
        Category::Pedestrian,
        Category::Motorcycle,
        Category::Bicycle,
        Category::TrafficCone,
        Category::Barrier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Trailer => "trailer",
            Category::ConstructionVehicle => "construction_vehicle",
            Category::Pedestrian => "pedestrian",
            Category::Motorcycle => "motorcycle",
            Category::Bicycle => "bicycle",
            Category::TrafficCone => "traffic_cone",
            Category::Barrier => "barrier",
        }
    }

    /// Cars, trucks, buses, trailers and construction vehicles.
    pub fn is_vehicle(self) -> bool {
        matches!(
            self,
            Category::Car | Category::Truck | Category::Bus | Category::Trailer | Category::ConstructionVehicle
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown category `{s}`")))
    }
}

/// Oriented 3D box. `size` is `(w, l, h)`; the length runs along the
/// heading (local x), the width along local y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox3D {
    pub id: String,
    pub category: Category,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl BBox3D {
    pub fn width(&self) -> f64 {
        self.size[0]
    }

    pub fn length(&self) -> f64 {
        self.size[1]
    }

    pub fn height(&self) -> f64 {
        self.size[2]
    }

    pub fn center_point(&self) -> Point3<f64> {
        Point3::from(self.center)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Domain(format!(
                "box `{}`: size components must be > 0, got {:?}",
                self.id, self.size
            )));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(Error::Domain(format!(
                "box `{}`: yaw {} outside (-pi, pi]",
                self.id, self.yaw
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("box `{}`: non-finite center", self.id)));
        }
        Ok(())
    }

    /// Box-to-world pose (rotation about z by yaw, translation to center).
    pub fn pose(&self) -> Rigid {
        Rigid::from_yaw_translation(self.yaw, Vector3::from(self.center))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// The eight corners of an oriented box.
///
/// Bottom face first, counter-clockwise seen from +z starting at the
/// front-left corner: `(+l/2, +w/2)`, `(-l/2, +w/2)`, `(-l/2, -w/2)`,
/// `(+l/2, -w/2)`; then the top face in the same order.
pub fn box_corners(b: &BBox3D) -> [Point3<f64>; 8] {
    const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let (hl, hw, hh) = (b.length() / 2.0, b.width() / 2.0, b.height() / 2.0);
    let pose = b.pose();
    let mut out = [Point3::origin(); 8];
    for (i, (sz, (sx, sy))) in [-hh, hh]
        .iter()
        .flat_map(|z| SIGNS.iter().map(move |s| (*z, *s)))
        .enumerate()
    {
        out[i] = pose.transform_point(&Point3::new(sx * hl, sy * hw, sz));
    }
    out
}

/// Re-expresses a world box in the ego frame given the ego-to-world pose.
pub fn world_to_ego(b: &BBox3D, ego_pose: &Rigid) -> Result<BBox3D> {
    super::rigid::check_rotation(&ego_pose.rotation)?;
    let inv = ego_pose.inverse();
    let c = inv.transform_point(&b.center_point());
    Ok(BBox3D {
        center: [c.x, c.y, c.z],
        yaw: wrap_angle(b.yaw - ego_pose.yaw()),
        ..b.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(center: [f64; 3], size: [f64; 3], yaw: f64) -> BBox3D {
        BBox3D {
            id: "b".into(),
            category: Category::Car,
            center,
            size,
            yaw,
        }
    }

    fn approx_pt(p: &Point3<f64>, q: [f64; 3]) -> bool {
        (p - Point3::from(q)).norm() < 1e-12
    }

    #[test]
    fn axis_aligned_corners() {
        let c = box_corners(&bx([0.0; 3], [2.0, 4.0, 1.0], 0.0));
        for p in &c {
            assert!((p.x.abs() - 2.0).abs() < 1e-15);
            assert!((p.y.abs() - 1.0).abs() < 1e-15);
            assert!((p.z.abs() - 0.5).abs() < 1e-15);
        }
        assert!(approx_pt(&c[0], [2.0, 1.0, -0.5]));
        assert!(approx_pt(&c[4], [2.0, 1.0, 0.5]));
    }

    #[test]
    fn quarter_turn_rotates_footprint() {
        let c = box_corners(&bx([0.0; 3], [2.0, 4.0, 1.0], PI / 2.0));
        // (2, 1, -0.5) rotated by +90° about z.
        assert!(approx_pt(&c[0], [-1.0, 2.0, -0.5]));
    }

    #[test]
    fn yaw_pi_and_minus_pi_agree_as_sets() {
        let a = box_corners(&bx([1.0, 2.0, 0.0], [2.0, 4.0, 1.0], PI));
        let b = box_corners(&bx([1.0, 2.0, 0.0], [2.0, 4.0, 1.0], -PI));
        for p in &a {
            assert!(b.iter().any(|q| (p - q).norm() < 1e-12));
        }
    }

    #[test]
    fn ego_identity_and_translation() {
        let b = bx([15.0, 0.0, 0.0], [2.0, 4.0, 1.5], 0.3);
        assert_eq!(world_to_ego(&b, &Rigid::identity()).unwrap(), b);
        let ego = Rigid::from_yaw_translation(0.0, Vector3::new(10.0, 0.0, 0.0));
        let e = world_to_ego(&b, &ego).unwrap();
        assert_eq!(e.center, [5.0, 0.0, 0.0]);
        assert_eq!(e.yaw, 0.3);
    }

    #[test]
    fn ego_quarter_turn() {
        let b = bx([0.0, 5.0, 0.0], [2.0, 4.0, 1.5], PI / 2.0);
        let ego = Rigid::from_yaw_translation(PI / 2.0, Vector3::zeros());
        let e = world_to_ego(&b, &ego).unwrap();
        assert!((e.center[0] - 5.0).abs() < 1e-12);
        assert!(e.center[1].abs() < 1e-12);
        assert!(e.yaw.abs() < 1e-12);
    }

    #[test]
    fn ego_rejects_non_rigid() {
        let b = bx([0.0; 3], [1.0; 3], 0.0);
        let mut ego = Rigid::identity();
        ego.rotation[(0, 0)] = 2.0;
        assert!(world_to_ego(&b, &ego).is_err());
    }

    #[test]
    fn validate_rejects_bad_boxes() {
        assert!(bx([0.0; 3], [0.0, 1.0, 1.0], 0.0).validate().is_err());
        assert!(bx([0.0; 3], [1.0, 1.0, 1.0], -PI).validate().is_err());
        assert!(bx([0.0; 3], [1.0, 1.0, 1.0], PI).validate().is_ok());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
    }

    proptest! {
        #[test]
        fn corner_distances_match_size(
            center in prop::array::uniform3(-50.0f64..50.0),
            size in prop::array::uniform3(0.1f64..12.0),
            yaw in -PI..PI,
        ) {
            let b = bx(center, size, yaw);
            let c = box_corners(&b);
            let (w, l, h) = (size[0], size[1], size[2]);
            // Bottom-face edges alternate length / width, verticals are h.
            prop_assert!(((c[0] - c[1]).norm() - l).abs() < 1e-9);
            prop_assert!(((c[1] - c[2]).norm() - w).abs() < 1e-9);
            prop_assert!(((c[2] - c[3]).norm() - l).abs() < 1e-9);
            prop_assert!(((c[3] - c[0]).norm() - w).abs() < 1e-9);
            for i in 0..4 {
                prop_assert!(((c[i] - c[i + 4]).norm() - h).abs() < 1e-9);
            }
            let diag = (w * w + l * l + h * h).sqrt();
            prop_assert!(((c[0] - c[6]).norm() - diag).abs() < 1e-9);
        }
    }
}
