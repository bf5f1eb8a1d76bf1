use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_collision, check_visibility, classify_distance, classify_view, default_dims, view_sector,
    DistanceBins, PlacementSpec, Trajectory,
};
use crate::error::{Error, Result};
use crate::scene::{wrap_angle, BBox3D, SceneBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub bins: DistanceBins,
    pub max_draws: usize,
    pub heading_jitter_deg: f64,
    /// Inflation of the inserted footprint for collision checks, meters.
    pub safety_margin: f64,
    pub min_pixels: f64,
    /// Defaults to `ceil(T / 2)` when unset.
    pub min_frames: Option<usize>,
    /// Draws evaluated per parallel batch.
    pub batch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            bins: DistanceBins::default(),
            max_draws: 10_000,
            heading_jitter_deg: 10.0,
            safety_margin: 0.5,
            min_pixels: 100.0,
            min_frames: None,
            batch: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Rejection {
    Bin,
    Collision,
    Visibility,
}

impl Rejection {
    fn as_str(self) -> &'static str {
        match self {
            Rejection::Bin => "bin",
            Rejection::Collision => "collision",
            Rejection::Visibility => "visibility",
        }
    }
}

/// Builds a constant-velocity trajectory from a frame-0 center and heading.
pub(crate) fn constant_velocity(
    id: &str,
    spec: &PlacementSpec,
    start: [f64; 2],
    heading: f64,
    num_frames: usize,
    fps: f64,
) -> Trajectory {
    let [w, l, h] = default_dims(spec.category);
    let (s, c) = heading.sin_cos();
    let yaw = wrap_angle(heading);
    let boxes = (0..num_frames)
        .map(|i| {
            let dist = spec.speed * i as f64 / fps;
            BBox3D {
                id: id.to_string(),
                category: spec.category,
                center: [start[0] + dist * c, start[1] + dist * s, h / 2.0],
                size: [w, l, h],
                yaw,
            }
        })
        .collect();
    Trajectory {
        id: id.to_string(),
        category: spec.category,
        boxes,
    }
}

/// Draw `index` of the rejection sampler. Every draw has its own ChaCha
/// stream, so the outcome of a draw does not depend on evaluation order.
fn draw(
    scene: &SceneBundle,
    spec: &PlacementSpec,
    cfg: &SamplerConfig,
    id: &str,
    index: u64,
) -> std::result::Result<Trajectory, Rejection> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);

    let (a0, a1) = view_sector(spec.view_bin);
    let (r0, r1) = cfg.bins.range(spec.distance_bin);
    let theta = rng.random_range(a0..a1);
    // Uniform in area over the annulus sector.
    let r = rng.random_range(r0 * r0..r1 * r1).sqrt();
    let jitter = cfg.heading_jitter_deg.to_radians();
    let heading = if jitter > 0.0 {
        rng.random_range(-jitter..jitter)
    } else {
        0.0
    };

    // The world frame is the frame-0 ego pose, so ego and world coincide.
    let start = [r * theta.cos(), r * theta.sin()];
    let probe = [start[0], start[1], 0.0];
    if classify_view(&probe).ok() != Some(spec.view_bin)
        || classify_distance(&probe, &cfg.bins) != spec.distance_bin
    {
        return Err(Rejection::Bin);
    }

    let traj = constant_velocity(id, spec, start, heading, scene.num_frames(), scene.meta.fps);
    if !check_collision(&traj, scene, cfg.safety_margin).is_clear() {
        return Err(Rejection::Collision);
    }
    let min_frames = cfg.min_frames.unwrap_or(scene.num_frames().div_ceil(2));
    if !check_visibility(&traj, scene, cfg.min_pixels, min_frames).visible {
        return Err(Rejection::Visibility);
    }
    Ok(traj)
}

/// Seeded rejection sampling of an insertion trajectory in the requested
/// view/distance bin. Draws are evaluated in parallel batches; the
/// accepted draw is always the lowest-index success, so the result only
/// depends on `(scene, spec, cfg)`.
pub fn sample_placement(
    scene: &SceneBundle,
    spec: &PlacementSpec,
    cfg: &SamplerConfig,
    id: &str,
) -> Result<Trajectory> {
    spec.validate()?;
    let mut counts: BTreeMap<Rejection, usize> = BTreeMap::new();
    let batch = cfg.batch.max(1);
    let mut start = 0usize;
    while start < cfg.max_draws {
        let end = (start + batch).min(cfg.max_draws);
        let results: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| draw(scene, spec, cfg, id, i as u64))
            .collect();
        for r in results {
            match r {
                Ok(traj) => return Ok(traj),
                Err(why) => *counts.entry(why).or_default() += 1,
            }
        }
        start = end;
    }
    let reason = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(r, _)| r.as_str())
        .unwrap_or("none");
    Err(Error::NoFeasiblePlacement {
        draws: cfg.max_draws,
        reason: reason.to_string(),
    })
}
