//! Scene bundle data model and calibration math.
//!
//! Conventions used throughout the crate:
//!
//! - world: right-handed, z up; the world frame is the ego pose at frame 0.
//! - camera: OpenCV style, x right, y down, z forward.
//! - ego: x forward, y left, z up.
//! - extrinsics are stored camera-to-world and inverted for projection.

mod bbox;
mod bundle;
mod camera;
mod rigid;

pub use bbox::{box_corners, wrap_angle, world_to_ego, BBox3D, Category};
pub use bundle::{load_scene_bundle, save_scene_bundle, SceneBundle, SceneMeta};
pub use camera::{Camera, Intrinsics, Projection};
pub use rigid::Rigid;
pub(crate) use bundle::{read_json as read_json_file, write_json as write_json_file};

/// Valid metric depth is finite and strictly positive; everything else
/// (zero from 16-bit PNGs, NaN, infinities) means "unknown".
#[inline]
pub fn is_valid_depth(z: f64) -> bool {
    z.is_finite() && z > 0.0
}
