//! Insertion trajectories by view and distance bin, feasibility checks and
//! annotation export.

mod annotations;
mod collision;
mod sample;
mod visibility;

pub use annotations::export_annotations;
pub use collision::{check_collision, CollisionReport, Footprint};
pub use sample::{sample_placement, SamplerConfig};
pub use visibility::{check_visibility, projected_hull_area, VisibilityReport};

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{BBox3D, Category};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewBin {
    Front,
    Back,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceBin {
    Close,
    Mid,
    Far,
}

impl ViewBin {
    pub const ALL: [ViewBin; 4] = [ViewBin::Front, ViewBin::Back, ViewBin::Left, ViewBin::Right];
}

impl DistanceBin {
    pub const ALL: [DistanceBin; 3] = [DistanceBin::Close, DistanceBin::Mid, DistanceBin::Far];
}

impl fmt::Display for ViewBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewBin::Front => "front",
            ViewBin::Back => "back",
            ViewBin::Left => "left",
            ViewBin::Right => "right",
        })
    }
}

impl fmt::Display for DistanceBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceBin::Close => "close",
            DistanceBin::Mid => "mid",
            DistanceBin::Far => "far",
        })
    }
}

/// One requested insertion, as read from placement spec JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub category: Category,
    #[serde(rename = "view")]
    pub view_bin: ViewBin,
    #[serde(rename = "distance")]
    pub distance_bin: DistanceBin,
    /// Meters per second; 0 is a static object.
    pub speed: f64,
    pub seed: u64,
}

impl PlacementSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::Domain(format!("speed must be >= 0, got {}", self.speed)));
        }
        Ok(())
    }
}

/// One box per scene frame for an inserted object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub category: Category,
    pub boxes: Vec<BBox3D>,
}

/// Range thresholds (meters, BEV distance in the ego frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceBins {
    /// `d < mid` is close.
    pub mid: f64,
    /// `d >= far` is far.
    pub far: f64,
    /// Sampling range for the close bin starts here.
    pub close_min: f64,
    /// Sampling range for the far bin ends here.
    pub far_max: f64,
}

impl Default for DistanceBins {
    fn default() -> Self {
        Self {
            mid: 15.0,
            far: 30.0,
            close_min: 4.0,
            far_max: 50.0,
        }
    }
}

impl DistanceBins {
    pub fn range(&self, bin: DistanceBin) -> (f64, f64) {
        match bin {
            DistanceBin::Close => (self.close_min, self.mid),
            DistanceBin::Mid => (self.mid, self.far),
            DistanceBin::Far => (self.far, self.far_max),
        }
    }
}

/// Azimuth bin of an ego-frame position (x forward, y left). Boundaries
/// belong to the first bin in the order front, left, right, back.
pub fn classify_view(center_ego: &[f64; 3]) -> Result<ViewBin> {
    let (x, y) = (center_ego[0], center_ego[1]);
    if x == 0.0 && y == 0.0 {
        return Err(Error::Domain("cannot classify the ego origin".into()));
    }
    let theta = y.atan2(x);
    Ok(if theta.abs() <= FRAC_PI_4 {
        ViewBin::Front
    } else if theta > FRAC_PI_4 && theta <= 3.0 * FRAC_PI_4 {
        ViewBin::Left
    } else if (-3.0 * FRAC_PI_4..-FRAC_PI_4).contains(&theta) {
        ViewBin::Right
    } else {
        ViewBin::Back
    })
}

pub fn classify_distance(center_ego: &[f64; 3], bins: &DistanceBins) -> DistanceBin {
    let d = center_ego[0].hypot(center_ego[1]);
    if d < bins.mid {
        DistanceBin::Close
    } else if d < bins.far {
        DistanceBin::Mid
    } else {
        DistanceBin::Far
    }
}

/// Angular range `[lo, hi]` sampled for a view bin. Back wraps through
/// pi, so it is expressed as `[3pi/4, 5pi/4]`.
pub(crate) fn view_sector(bin: ViewBin) -> (f64, f64) {
    match bin {
        ViewBin::Front => (-FRAC_PI_4, FRAC_PI_4),
        ViewBin::Left => (FRAC_PI_4, 3.0 * FRAC_PI_4),
        ViewBin::Right => (-3.0 * FRAC_PI_4, -FRAC_PI_4),
        ViewBin::Back => (3.0 * FRAC_PI_4, PI + FRAC_PI_4),
    }
}

static DEFAULT_DIMS: OnceLock<BTreeMap<Category, [f64; 3]>> = OnceLock::new();

/// Mean `(w, l, h)` per class, from the bundled `categories.json` table.
pub fn default_dims(category: Category) -> [f64; 3] {
    DEFAULT_DIMS.get_or_init(|| {
        serde_json::from_str(include_str!("categories.json"))
            .expect("bundled categories.json is valid")
    })[&category]
}
