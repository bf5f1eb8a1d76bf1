//! Frozen linear latent codec: 8x8 patchify followed by a seeded
//! full-row-rank projection, decoded through its pseudo-inverse.

use image::RgbImage;
use nalgebra::DMatrix;
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::Mat;
use crate::error::{Error, Result};
use crate::image_buf::Mask;

pub const PATCH: usize = 8;
pub const IMAGE_CHANNELS: usize = 3;

/// Real-valued image with shape `(height, width, channels)`.
pub type ImageF = Array3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentShape {
    pub views: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn tokens(&self) -> usize {
        self.views * self.frames * self.height * self.width
    }

    pub fn patches_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn token_index(&self, view: usize, frame: usize, y: usize, x: usize) -> usize {
        ((view * self.frames + frame) * self.height + y) * self.width + x
    }
}

/// Latent tensor of logical shape `(V, F, C, h, w)`, stored as a token
/// matrix with one row per `(view, frame, y, x)` and one column per
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    shape: LatentShape,
    tokens: Mat,
}

impl Latent {
    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            tokens: Mat::zeros((shape.tokens(), shape.channels)),
        }
    }

    pub fn from_tokens(shape: LatentShape, tokens: Mat) -> Result<Self> {
        if tokens.dim() != (shape.tokens(), shape.channels) {
            return Err(Error::Shape(format!(
                "token matrix {:?} does not match latent shape {:?}",
                tokens.dim(),
                shape
            )));
        }
        Ok(Self { shape, tokens })
    }

    /// Standard normal entries drawn from `seed`.
    pub fn seeded_normal(shape: LatentShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = Mat::from_shape_simple_fn((shape.tokens(), shape.channels), || StandardNormal.sample(&mut rng));
        Self { shape, tokens }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn tokens(&self) -> &Mat {
        &self.tokens
    }

    pub fn into_tokens(self) -> Mat {
        self.tokens
    }

    pub fn get(&self, view: usize, frame: usize, channel: usize, y: usize, x: usize) -> f64 {
        self.tokens[[self.shape.token_index(view, frame, y, x), channel]]
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &Latent) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("latent shapes differ: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }
}

/// Maps 8-bit RGB to `[-1, 1]`.
pub fn rgb_to_signed(img: &RgbImage) -> ImageF {
    let (w, h) = img.dimensions();
    ImageF::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        img.get_pixel(x as u32, y as u32)[c] as f64 / 127.5 - 1.0
    })
}

pub fn mask_to_signed(mask: &Mask) -> ImageF {
    ImageF::from_shape_fn((mask.height(), mask.width(), 3), |(y, x, _)| {
        if *mask.get(x, y) {
            1.0
        } else {
            -1.0
        }
    })
}

pub fn signed_to_rgb(img: &ImageF) -> RgbImage {
    let (h, w, _) = img.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| ((img[[y as usize, x as usize, c]] + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

/// Patch rows for `images[view][frame]`, in token order, columns ordered
/// `(dy, dx, channel)`.
pub fn patchify(images: &[Vec<ImageF>]) -> Result<(Mat, usize, usize)> {
    let first = images
        .first()
        .and_then(|v| v.first())
        .ok_or_else(|| Error::Shape("no images to encode".into()))?;
    let (h, w, c) = first.dim();
    if h % PATCH != 0 || w % PATCH != 0 {
        return Err(Error::Shape(format!("image {w}x{h} not divisible by patch size {PATCH}")));
    }
    if c != IMAGE_CHANNELS {
        return Err(Error::Shape(format!("expected {IMAGE_CHANNELS} channels, got {c}")));
    }
    let frames = images[0].len();
    let (ph, pw) = (h / PATCH, w / PATCH);
    let k = PATCH * PATCH * c;
    let mut out = Mat::zeros((images.len() * frames * ph * pw, k));
    let mut row = 0;
    for view in images {
        if view.len() != frames {
            return Err(Error::Shape("views have different frame counts".into()));
        }
        for img in view {
            if img.dim() != (h, w, c) {
                return Err(Error::Shape("images have different sizes".into()));
            }
            for py in 0..ph {
                for px in 0..pw {
                    let mut col = 0;
                    for dy in 0..PATCH {
                        for dx in 0..PATCH {
                            for ch in 0..c {
                                out[[row, col]] = img[[py * PATCH + dy, px * PATCH + dx, ch]];
                                col += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    Ok((out, ph, pw))
}

pub fn unpatchify(patches: &Mat, shape: LatentShape) -> Vec<Vec<ImageF>> {
    let (h, w) = (shape.height * PATCH, shape.width * PATCH);
    (0..shape.views)
        .map(|v| {
            (0..shape.frames)
                .map(|f| {
                    ImageF::from_shape_fn((h, w, IMAGE_CHANNELS), |(y, x, c)| {
                        let row = shape.token_index(v, f, y / PATCH, x / PATCH);
                        let col = ((y % PATCH) * PATCH + x % PATCH) * IMAGE_CHANNELS + c;
                        patches[[row, col]]
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Codec {
    /// `C x 192` projection.
    encoder: Mat,
    /// `C x 192` rows of the transposed pseudo-inverse, `(W W^T)^-1 W`.
    decoder: Mat,
}

impl Codec {
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        let k = PATCH * PATCH * IMAGE_CHANNELS;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (k as f64).sqrt();
        let encoder = Mat::from_shape_simple_fn((channels, k), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        let wm = DMatrix::from_row_iterator(channels, k, encoder.iter().copied());
        let gram = &wm * wm.transpose();
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("codec projection is rank deficient".into()))?;
        let dec = inv * wm;
        let decoder = Mat::from_shape_fn((channels, k), |(r, c)| dec[(r, c)]);
        Ok(Self { encoder, decoder })
    }

    pub fn channels(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn encoder(&self) -> &Mat {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mat {
        &self.decoder
    }

    pub fn encode_patches(&self, patches: &Mat) -> Mat {
        patches.dot(&self.encoder.t())
    }

    pub fn decode_patches(&self, tokens: &Mat) -> Mat {
        tokens.dot(&self.decoder)
    }

    pub fn encode(&self, images: &[Vec<ImageF>]) -> Result<Latent> {
        let (patches, ph, pw) = patchify(images)?;
        let shape = LatentShape {
            views: images.len(),
            frames: images[0].len(),
            channels: self.channels(),
            height: ph,
            width: pw,
        };
        Latent::from_tokens(shape, self.encode_patches(&patches))
    }

    pub fn decode(&self, z: &Latent) -> Result<Vec<Vec<ImageF>>> {
        if z.shape().channels != self.channels() {
            return Err(Error::Shape(format!(
                "latent has {} channels, codec expects {}",
                z.shape().channels,
                self.channels()
            )));
        }
        Ok(unpatchify(&self.decode_patches(z.tokens()), z.shape()))
    }

    /// `decode(encode(images))`, the orthogonal projection onto the codec's
    /// reachable image space.
    pub fn project(&self, images: &[Vec<ImageF>]) -> Result<Vec<Vec<ImageF>>> {
        self.decode(&self.encode(images)?)
    }
}
