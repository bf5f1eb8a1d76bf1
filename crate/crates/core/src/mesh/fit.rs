use nalgebra::{Point3, Vector3};

use super::{aabb_extent, mesh_aabb, Mesh};
use crate::error::{Error, Result};
use crate::scene::{BBox3D, Rigid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Independent scale per axis; the transformed AABB equals the box.
    #[default]
    PerAxis,
    /// One scale for all axes (the tightest), mesh standing on the box
    /// bottom at the footprint center.
    Uniform,
}

/// Maps canonical asset coordinates into the world:
/// `p_world = Rz(rotation) * (scale ⊙ p) + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetTransform {
    pub scale: Vector3<f64>,
    pub rotation: f64,
    pub translation: Vector3<f64>,
}

impl AssetTransform {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        let scaled = Point3::from(self.scale.component_mul(&p.coords));
        Rigid::from_yaw_translation(self.rotation, self.translation).transform_point(&scaled)
    }
}

pub fn fit_mesh_to_box(mesh: &Mesh, target: &BBox3D, mode: FitMode) -> Result<AssetTransform> {
    let (lo, hi) = mesh_aabb(mesh)?;
    let ext = aabb_extent(&lo, &hi);
    if ext.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Degenerate(format!(
            "mesh AABB has zero extent: {:?}",
            ext.as_slice()
        )));
    }
    let per_axis = Vector3::new(
        target.length() / ext.x,
        target.width() / ext.y,
        target.height() / ext.z,
    );
    let center = Vector3::from(target.center);
    let rot = Rigid::from_yaw_translation(target.yaw, Vector3::zeros());
    let (scale, anchor_local, anchor_world) = match mode {
        FitMode::PerAxis => (per_axis, (lo.coords + hi.coords) / 2.0, center),
        FitMode::Uniform => {
            let s = per_axis.min();
            let bottom = Vector3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, lo.z);
            let box_bottom = center - Vector3::new(0.0, 0.0, target.height() / 2.0);
            (Vector3::repeat(s), bottom, box_bottom)
        }
    };
    let translation = anchor_world - rot.transform_vector(&scale.component_mul(&anchor_local));
    Ok(AssetTransform {
        scale,
        rotation: target.yaw,
        translation,
    })
}
