//! Canny edge detection with a fully pinned pipeline so results are
//! reproducible bit for bit:
//!
//! 1. 5x5 Gaussian blur, sigma = 1.4, using the integer kernel below
//!    (sum 159). Values stay scaled by 159; no rounding happens anywhere.
//! 2. 3x3 Sobel on the blurred image. Image borders replicate.
//! 3. Magnitude `hypot(gx, gy) / 159`; direction quantized to 0, 45, 90
//!    or 135 degrees by exact integer tests against tan(22.5°) and
//!    tan(67.5°).
//! 4. Non-maximum suppression along the quantized direction. With `f`
//!    the neighbor on the +y side (+x for the horizontal bin) and `b` the
//!    opposite one, a pixel survives iff `m >= m[f] && m > m[b]`, so a
//!    ridge two pixels wide resolves to its lower-index pixel.
//!    Out-of-image neighbors count as zero.
//! 5. Hysteresis: survivors with `m >= high` are strong, `m >= low` weak;
//!    weak pixels 8-connected to a strong one through weak pixels are
//!    kept. Zero-magnitude pixels are never edges.

use std::collections::VecDeque;

use crate::image_buf::{Mask, Plane};

pub const GAUSS_5X5: [[i64; 5]; 5] = [
    [2, 4, 5, 4, 2],
    [4, 9, 12, 9, 4],
    [5, 12, 15, 12, 5],
    [4, 9, 12, 9, 4],
    [2, 4, 5, 4, 2],
];
pub const GAUSS_SUM: i64 = 159;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Horizontal,
    Diagonal45,
    Vertical,
    Diagonal135,
}

impl Direction {
    fn quantize(gx: i64, gy: i64) -> Self {
        let (ax, ay) = (gx.abs(), gy.abs());
        // |gy| < tan(22.5°)|gx|  <=>  (|gy| + |gx|)^2 < 2 gx^2
        if (ay + ax) * (ay + ax) < 2 * ax * ax {
            return Direction::Horizontal;
        }
        // |gy| > tan(67.5°)|gx|  <=>  |gy| > |gx| && (|gy| - |gx|)^2 > 2 gx^2
        if ay > ax && (ay - ax) * (ay - ax) > 2 * ax * ax {
            return Direction::Vertical;
        }
        if (gx > 0) == (gy > 0) {
            Direction::Diagonal45
        } else {
            Direction::Diagonal135
        }
    }

    /// Offset of the forward neighbor; the backward one is its negation.
    fn forward(self) -> (isize, isize) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
            Direction::Diagonal45 => (1, 1),
            Direction::Diagonal135 => (-1, 1),
        }
    }
}

fn blur(gray: &Plane<u8>) -> Vec<i64> {
    let (w, h) = gray.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    // Separability does not hold for the integer kernel, so convolve in 2D.
    let mut out = vec![0i64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0i64;
            for (j, row) in GAUSS_5X5.iter().enumerate() {
                let sy = clamp(y as isize + j as isize - 2, h);
                for (i, &k) in row.iter().enumerate() {
                    let sx = clamp(x as isize + i as isize - 2, w);
                    acc += k * *gray.get(sx, sy) as i64;
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Squared gradient magnitude (scaled by 159²) and quantized direction.
fn gradients(blurred: &[i64], w: usize, h: usize) -> (Vec<i64>, Vec<Direction>) {
    let at = |x: isize, y: isize| {
        blurred[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut mag2 = vec![0i64; w * h];
    let mut dir = vec![Direction::Horizontal; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            let k = y as usize * w + x as usize;
            mag2[k] = gx * gx + gy * gy;
            dir[k] = Direction::quantize(gx, gy);
        }
    }
    (mag2, dir)
}

/// `m >= threshold` on the 159-scaled squared magnitude.
#[inline]
fn meets(mag2: i64, threshold: f64) -> bool {
    let t = threshold * GAUSS_SUM as f64;
    mag2 as f64 >= t * t
}

pub fn canny_edges(gray: &Plane<u8>, low: f64, high: f64) -> Mask {
    assert!(low <= high, "canny: low threshold must not exceed high");
    let (w, h) = gray.dims();
    if w == 0 || h == 0 {
        return Mask::filled(w, h, false);
    }
    let blurred = blur(gray);
    let (mag2, dir) = gradients(&blurred, w, h);

    let mag_at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            mag2[y as usize * w + x as usize]
        }
    };
    let mut weak = vec![false; w * h];
    let mut strong = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            let m = mag2[k];
            if m == 0 {
                continue;
            }
            let (dx, dy) = dir[k].forward();
            let (xi, yi) = (x as isize, y as isize);
            let fwd = mag_at(xi + dx, yi + dy);
            let back = mag_at(xi - dx, yi - dy);
            if !(m >= fwd && m > back) {
                continue;
            }
            weak[k] = meets(m, low);
            strong[k] = meets(m, high);
        }
    }

    let mut edges = Mask::filled(w, h, false);
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if strong[y * w + x] {
                edges.set(x, y, true);
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                if weak[ny * w + nx] && !*edges.get(nx, ny) {
                    edges.set(nx, ny, true);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    edges
}

/// ITU-R BT.601 luma, rounded.
pub fn to_grayscale(img: &image::RgbImage) -> Plane<u8> {
    Plane::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        let [r, g, b] = img.get_pixel(x as u32, y as u32).0;
        (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
    })
}
