//! The five dense guidance maps for one view and frame: background depth
//! (D), normal (N) and edge (E) maps, plus the rendered object image (O)
//! and object mask (M). D, N and E are nulled inside the dilated object
//! mask so the generator owns that region.

mod canny;
mod depth;
mod normal;

pub use canny::{canny_edges, to_grayscale, GAUSS_5X5, GAUSS_SUM};
pub use depth::{flat_ground_depth, normalize_depth, valid_mask};
pub use normal::{decode_normal, depth_to_normal, encode_normal, NULL_NORMAL};

use std::borrow::Cow;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_buf::{save_png, Mask, Plane};
use crate::raster::ObjectRender;
use crate::scene::SceneBundle;

pub const NULL_DEPTH: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceParams {
    pub canny_low: f64,
    pub canny_high: f64,
    /// Radius of the square dilation applied to M before masking.
    pub dilation: usize,
    /// Use ground-plane depth when the bundle has no depth for a camera.
    pub flat_ground_fallback: bool,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            canny_low: 50.0,
            canny_high: 150.0,
            dilation: 5,
            flat_ground_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSet {
    pub depth: Plane<u8>,
    pub normal: RgbImage,
    pub edge: Mask,
    pub object: RgbImage,
    pub mask: Mask,
}

impl GuidanceSet {
    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    fn check_aligned(&self) -> Result<()> {
        let d = self.mask.dims();
        let rgb = |i: &RgbImage| (i.width() as usize, i.height() as usize);
        if self.depth.dims() != d || self.edge.dims() != d || rgb(&self.normal) != d || rgb(&self.object) != d {
            return Err(Error::Shape("guidance channels differ in size".into()));
        }
        Ok(())
    }

    /// Writes `<dir>/<frame:04>_{depth,normal,edge,object,mask}.png`.
    pub fn write(&self, dir: &Path, frame: usize) -> Result<()> {
        let name = |kind: &str| dir.join(format!("{frame:04}_{kind}.png"));
        save_png(&self.depth.to_gray(), &name("depth"))?;
        save_png(&self.normal, &name("normal"))?;
        save_png(&self.edge.to_gray(), &name("edge"))?;
        save_png(&self.object, &name("object"))?;
        save_png(&self.mask.to_gray(), &name("mask"))
    }
}

/// Overwrites D, N and E with their null encodings wherever the object
/// mask, dilated by `radius`, is set. O and M pass through.
pub fn mask_foreground(g: &GuidanceSet, radius: usize) -> GuidanceSet {
    let region = g.mask.dilate(radius);
    let mut out = g.clone();
    let (w, h) = region.dims();
    for y in 0..h {
        for x in 0..w {
            if *region.get(x, y) {
                out.depth.set(x, y, NULL_DEPTH);
                out.edge.set(x, y, false);
                out.normal.put_pixel(x as u32, y as u32, Rgb(NULL_NORMAL));
            }
        }
    }
    out
}

/// Scene depth for a view: the bundle's map, else the flat-ground
/// fallback when enabled.
pub fn scene_depth_or_fallback<'a>(
    scene: &'a SceneBundle,
    camera: usize,
    frame: usize,
    params: &GuidanceParams,
) -> Result<Cow<'a, Plane<f64>>> {
    match scene.depth(camera, frame) {
        Some(d) => Ok(Cow::Borrowed(d)),
        None if params.flat_ground_fallback => {
            Ok(Cow::Owned(flat_ground_depth(&scene.cameras[camera], frame)))
        }
        None => Err(Error::MissingDepth {
            camera: scene.cameras[camera].name.clone(),
            frame,
        }),
    }
}

/// Guidance for one (camera, frame) view.
pub fn build_view_guidance(
    scene: &SceneBundle,
    camera: usize,
    frame: usize,
    render: &ObjectRender,
    params: &GuidanceParams,
) -> Result<GuidanceSet> {
    let cam = &scene.cameras[camera];
    if render.dims() != (cam.width, cam.height) {
        return Err(Error::Shape(format!(
            "render is {:?}, camera `{}` is {}x{}",
            render.dims(),
            cam.name,
            cam.width,
            cam.height
        )));
    }
    let depth = scene_depth_or_fallback(scene, camera, frame, params)?;
    let background = GuidanceSet {
        depth: normalize_depth(&depth, &valid_mask(&depth)),
        normal: depth_to_normal(&depth, &cam.intrinsics),
        edge: canny_edges(
            &to_grayscale(&scene.frames[camera][frame]),
            params.canny_low,
            params.canny_high,
        ),
        object: render.color.clone(),
        mask: render.mask.clone(),
    };
    background.check_aligned()?;
    Ok(mask_foreground(&background, params.dilation))
}

/// Guidance for every view; `renders` is indexed `[camera][frame]`.
pub fn build_guidance(
    scene: &SceneBundle,
    renders: &[Vec<ObjectRender>],
    params: &GuidanceParams,
) -> Result<Vec<Vec<GuidanceSet>>> {
    if renders.len() != scene.cameras.len() {
        return Err(Error::Shape(format!(
            "{} render lists for {} cameras",
            renders.len(),
            scene.cameras.len()
        )));
    }
    renders
        .iter()
        .enumerate()
        .map(|(ci, per_frame)| {
            if per_frame.len() != scene.num_frames() {
                return Err(Error::Shape(format!(
                    "camera {ci}: {} renders for {} frames",
                    per_frame.len(),
                    scene.num_frames()
                )));
            }
            per_frame
                .iter()
                .enumerate()
                .map(|(fi, r)| build_view_guidance(scene, ci, fi, r, params))
                .collect()
        })
        .collect()
}
