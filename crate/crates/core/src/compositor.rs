//! Naive insertion baseline: the rendered asset pasted over the source
//! frame with an optional depth test against scene depth.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_buf::{Mask, Plane};
use crate::raster::ObjectRender;
use crate::scene::is_valid_depth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompositeConfig {
    /// Asset pixels draw unless they are more than this far behind the
    /// scene surface.
    pub depth_bias: f64,
    /// Width in pixels of the inner alpha ramp at the mask boundary;
    /// 0 gives a hard edge.
    pub feather: usize,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        Self {
            depth_bias: 0.05,
            feather: 0,
        }
    }
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_bias.is_finite() && self.depth_bias >= 0.0) {
            return Err(Error::Domain("depth_bias must be >= 0".into()));
        }
        Ok(())
    }
}

/// Chessboard distance from each mask pixel to the nearest pixel outside
/// the mask (pixels beyond the image border count as outside), capped at
/// `cap`. Unmasked pixels get 0.
fn inner_distance(mask: &Mask, cap: usize) -> Plane<usize> {
    let (w, h) = mask.dims();
    let mut dist = mask.map(|&m| if m { cap } else { 0 });
    // Peel one ring per iteration; cheap for the small caps used here.
    let mut current = mask.clone();
    for d in 1..cap {
        let eroded = Mask::from_fn(w, h, |x, y| {
            if !*current.get(x, y) || x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                return false;
            }
            (y - 1..=y + 1).all(|j| (x - 1..=x + 1).all(|i| *current.get(i, j)))
        });
        for y in 0..h {
            for x in 0..w {
                if *current.get(x, y) && !*eroded.get(x, y) {
                    dist.set(x, y, d);
                }
            }
        }
        current = eroded;
    }
    dist
}

pub fn composite_naive(
    frame: &RgbImage,
    render: &ObjectRender,
    scene_depth: Option<&Plane<f64>>,
    cfg: &CompositeConfig,
) -> Result<RgbImage> {
    cfg.validate()?;
    let (w, h) = frame.dimensions();
    if render.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "frame is {w}x{h}, render is {:?}",
            render.dims()
        )));
    }
    if let Some(d) = scene_depth {
        if d.dims() != (w as usize, h as usize) {
            return Err(Error::Shape(format!(
                "frame is {w}x{h}, scene depth is {:?}",
                d.dims()
            )));
        }
    }
    let ramp = (cfg.feather > 0).then(|| inner_distance(&render.mask, cfg.feather + 1));

    let mut out = frame.clone();
    for y in 0..h as usize {
        for x in 0..w as usize {
            if !*render.mask.get(x, y) {
                continue;
            }
            let drawn = match scene_depth {
                None => true,
                Some(d) => {
                    let s = *d.get(x, y);
                    !is_valid_depth(s) || *render.depth.get(x, y) < s + cfg.depth_bias
                }
            };
            if !drawn {
                continue;
            }
            let (xu, yu) = (x as u32, y as u32);
            let fg = render.color.get_pixel(xu, yu).0;
            let px = match &ramp {
                None => fg,
                Some(r) => {
                    let alpha = (*r.get(x, y) as f64 / (cfg.feather + 1) as f64).min(1.0);
                    let bg = frame.get_pixel(xu, yu).0;
                    std::array::from_fn(|c| {
                        (alpha * fg[c] as f64 + (1.0 - alpha) * bg[c] as f64).round() as u8
                    })
                }
            };
            out.put_pixel(xu, yu, Rgb(px));
        }
    }
    Ok(out)
}
