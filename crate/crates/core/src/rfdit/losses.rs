//! Diffusion, masked reconstruction and perceptual losses.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::codec::ImageF;
use super::tape::{Graph, Mat, Var};
use crate::error::{Error, Result};

pub const MASK_EPS: f64 = 1e-6;
const FEATURE_EPS: f64 = 1e-10;
pub const FEATURE_NET_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub diffusion: f64,
    pub mask: f64,
    pub lpips: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            mask: 0.1,
            lpips: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.diffusion, self.mask, self.lpips].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub diffusion: f64,
    pub mask: f64,
    pub lpips: f64,
}

pub fn loss_total(parts: &LossParts, w: &LossWeights) -> f64 {
    w.diffusion * parts.diffusion + w.mask * parts.mask + w.lpips * parts.lpips
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} vs {b} elements")));
    }
    Ok(())
}

pub fn loss_diffusion(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// `sum((M ⊙ (x̂ - x))^2) / (sum(M) + eps)` with `M` broadcast to the
/// image shape.
pub fn loss_mask(pred: &[f64], target: &[f64], mask: &[f64]) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    check_len(pred.len(), mask.len())?;
    let num: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .map(|((p, t), m)| {
            let d = m * (p - t);
            d * d
        })
        .sum();
    Ok(num / (mask.iter().sum::<f64>() + MASK_EPS))
}

pub fn loss_diffusion_graph(g: &mut Graph, pred: Var, target: Var) -> Var {
    let d = g.sub(pred, target);
    let sq = g.square(d);
    g.mean(sq)
}

pub fn loss_mask_graph(g: &mut Graph, pred: Var, target: Var, mask: Rc<Mat>) -> Var {
    let denom = mask.sum() + MASK_EPS;
    let d = g.sub(pred, target);
    let md = g.mul_const(d, mask);
    let sq = g.square(md);
    let s = g.sum(sq);
    g.scale(s, 1.0 / denom)
}

/// One stride-2, 3x3, padding-1 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(9 * in_channels) x out_channels`, row index `(ky * 3 + kx) * in_channels + c`.
    pub weight: Mat,
    pub bias: Mat,
}

/// Frozen seeded convolutional feature extractor (3 -> 8 -> 16 -> 32
/// channels, GELU after each layer).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNet {
    pub layers: Vec<ConvLayer>,
}

impl Default for FeatureNet {
    fn default() -> Self {
        Self::new(FEATURE_NET_SEED)
    }
}

impl FeatureNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = [(3, 8), (8, 16), (16, 32)]
            .into_iter()
            .map(|(cin, cout)| {
                let fan_in = 9 * cin;
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let weight = Mat::from_shape_simple_fn((fan_in, cout), || dist.sample(&mut rng));
                let bias = Mat::from_shape_simple_fn((1, cout), || 0.1 * dist.sample(&mut rng));
                ConvLayer {
                    in_channels: cin,
                    out_channels: cout,
                    weight,
                    bias,
                }
            })
            .collect();
        Self { layers }
    }

    /// Features of a batch whose pixels are rows of `x`
    /// (`(b * h + y) * w + x`) with channels as columns. Returns one
    /// `locations x channels` matrix per layer.
    pub fn features_graph(&self, g: &mut Graph, x: Var, batch: usize, h: usize, w: usize) -> Vec<Var> {
        let mut cur = x;
        let (mut h, mut w) = (h, w);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
            let cin = layer.in_channels;
            let cols = 9 * cin;
            let mut index = Vec::with_capacity(batch * oh * ow * cols);
            for b in 0..batch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (2 * oy + ky) as isize - 1;
                                let ix = (2 * ox + kx) as isize - 1;
                                let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                                for c in 0..cin {
                                    index.push(
                                        inside.then(|| ((b * h + iy as usize) * w + ix as usize) * cin + c),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            let patches = g.gather(cur, Rc::new(index), (batch * oh * ow, cols));
            let wv = g.leaf(layer.weight.clone());
            let bv = g.leaf(layer.bias.clone());
            let y = g.matmul(patches, wv);
            let y = g.add_row(y, bv);
            cur = g.gelu(y);
            out.push(cur);
            h = oh;
            w = ow;
        }
        out
    }

    /// Unit-normalized features per layer, as constants.
    pub fn normalized_features(&self, images: &[&ImageF]) -> Result<Vec<Mat>> {
        let mut g = Graph::new();
        let (x, h, w) = image_rows(&mut g, images)?;
        let feats = self.features_graph(&mut g, x, images.len(), h, w);
        Ok(feats
            .into_iter()
            .map(|f| {
                let n = g.row_normalize(f, FEATURE_EPS);
                g.value(n).clone()
            })
            .collect())
    }
}

fn image_rows(g: &mut Graph, images: &[&ImageF]) -> Result<(Var, usize, usize)> {
    let first = images.first().ok_or_else(|| Error::Shape("no images".into()))?;
    let (h, w, c) = first.dim();
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if img.dim() != (h, w, c) {
            return Err(Error::Shape("images differ in size".into()));
        }
        data.extend(img.iter().copied());
    }
    let m = Mat::from_shape_vec((images.len() * h * w, c), data).expect("sizes checked");
    Ok((g.leaf(m), h, w))
}

/// Perceptual distance of `pred` features against precomputed normalized
/// target features.
pub fn loss_perceptual_graph(
    g: &mut Graph,
    net: &FeatureNet,
    pred_rows: Var,
    batch: usize,
    h: usize,
    w: usize,
    target_features: &[Mat],
) -> Var {
    let feats = net.features_graph(g, pred_rows, batch, h, w);
    let per_layer: Vec<Var> = feats
        .into_iter()
        .zip(target_features)
        .map(|(f, t)| {
            let n = g.row_normalize(f, FEATURE_EPS);
            let tv = g.leaf(t.clone());
            let d = g.sub(n, tv);
            let sq = g.square(d);
            g.mean(sq)
        })
        .collect();
    let total = per_layer[1..].iter().fold(per_layer[0], |acc, &l| g.add(acc, l));
    g.scale(total, 1.0 / per_layer.len() as f64)
}

pub fn loss_perceptual(net: &FeatureNet, pred: &[ImageF], target: &[ImageF]) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    let t: Vec<&ImageF> = target.iter().collect();
    let p: Vec<&ImageF> = pred.iter().collect();
    let target_features = net.normalized_features(&t)?;
    let mut g = Graph::new();
    let (x, h, w) = image_rows(&mut g, &p)?;
    if (h, w, 3) != target[0].dim() {
        return Err(Error::Shape("prediction and target sizes differ".into()));
    }
    let l = loss_perceptual_graph(&mut g, net, x, pred.len(), h, w, &target_features);
    Ok(g.scalar(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfdit::tape::gelu;
    use rand::Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageF {
        ImageF::from_shape_fn((h, w, 3), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diffusion_loss_cases() {
        let a = [1.0, -2.0, 0.5];
        assert_eq!(loss_diffusion(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert_eq!(loss_diffusion(&b, &a).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for i in 0..p.len() {
            acc += (p[i] - t[i]).powi(2);
        }
        assert!((loss_diffusion(&p, &t).unwrap() - acc / 1000.0).abs() < 1e-12);
        assert!(loss_diffusion(&p[..3], &t).is_err());
    }

    #[test]
    fn mask_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ones = vec![1.0; 300];
        let mse = loss_diffusion(&p, &t).unwrap();
        let lm = loss_mask(&p, &t, &ones).unwrap();
        assert!((lm * (300.0 + MASK_EPS) / 300.0 - mse).abs() < 1e-12);
        assert!(((lm - mse) / mse).abs() < 1e-6);
        assert_eq!(loss_mask(&p, &t, &vec![0.0; 300]).unwrap(), 0.0);
        let mut m = vec![0.0; 4];
        m[2] = 1.0;
        let l = loss_mask(&[0.0, 0.0, 2.0, 5.0], &[0.0; 4], &m).unwrap();
        assert_eq!(l, 4.0 / (1.0 + 1e-6));
    }

    #[test]
    fn total_loss_weights() {
        let parts = LossParts {
            diffusion: 1.0,
            mask: 1.0,
            lpips: 1.0,
        };
        assert!((loss_total(&parts, &LossWeights::default()) - 1.2).abs() < 1e-15);
        let zero = LossWeights {
            diffusion: 0.0,
            mask: 0.0,
            lpips: 0.0,
        };
        assert_eq!(loss_total(&parts, &zero), 0.0);
        let p = LossParts {
            diffusion: 0.7,
            mask: 3.0,
            lpips: 9.0,
        };
        let only = LossWeights {
            diffusion: 1.0,
            mask: 0.0,
            lpips: 0.0,
        };
        assert_eq!(loss_total(&p, &only), 0.7);
        assert!(LossWeights { mask: -0.1, ..only }.validate().is_err());
    }

    #[test]
    fn graph_losses_match_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Mat::from_shape_simple_fn((6, 5), || rng.random_range(-1.0..1.0));
        let t = Mat::from_shape_simple_fn((6, 5), || rng.random_range(-1.0..1.0));
        let m = Mat::from_shape_simple_fn((6, 5), || if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let mut g = Graph::new();
        let (pv, tv) = (g.leaf(p.clone()), g.leaf(t.clone()));
        let ld = loss_diffusion_graph(&mut g, pv, tv);
        let lm = loss_mask_graph(&mut g, pv, tv, Rc::new(m.clone()));
        let s = |x: &Mat| x.as_slice().unwrap().to_vec();
        assert!((g.scalar(ld) - loss_diffusion(&s(&p), &s(&t)).unwrap()).abs() < 1e-14);
        assert!((g.scalar(lm) - loss_mask(&s(&p), &s(&t), &s(&m)).unwrap()).abs() < 1e-14);
    }

    /// Direct nested-loop convolution, independent of the gather/matmul path.
    fn reference_perceptual(net: &FeatureNet, a: &[ImageF], b: &[ImageF]) -> f64 {
        fn conv(layer: &ConvLayer, x: &ImageF) -> ImageF {
            let (h, w, cin) = x.dim();
            let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
            let mut out = ImageF::zeros((oh, ow, layer.out_channels));
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..layer.out_channels {
                        let mut acc = layer.bias[[0, co]];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = 2 * oy as isize + ky as isize - 1;
                                let ix = 2 * ox as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    acc += x[[iy as usize, ix as usize, ci]] * layer.weight[[(ky * 3 + kx) * cin + ci, co]];
                                }
                            }
                        }
                        out[[oy, ox, co]] = gelu(acc);
                    }
                }
            }
            out
        }
        fn normalize(f: &ImageF) -> ImageF {
            let mut out = f.clone();
            let (h, w, c) = f.dim();
            for y in 0..h {
                for x in 0..w {
                    let n = ((0..c).map(|k| f[[y, x, k]].powi(2)).sum::<f64>() + 1e-10).sqrt();
                    for k in 0..c {
                        out[[y, x, k]] = f[[y, x, k]] / n;
                    }
                }
            }
            out
        }
        let mut per_layer = vec![(0.0, 0usize); net.layers.len()];
        for (ia, ib) in a.iter().zip(b) {
            let (mut fa, mut fb) = (ia.clone(), ib.clone());
            for (l, layer) in net.layers.iter().enumerate() {
                fa = conv(layer, &fa);
                fb = conv(layer, &fb);
                let (na, nb) = (normalize(&fa), normalize(&fb));
                for (x, y) in na.iter().zip(nb.iter()) {
                    per_layer[l].0 += (x - y).powi(2);
                    per_layer[l].1 += 1;
                }
            }
        }
        per_layer.iter().map(|(s, n)| s / *n as f64).sum::<f64>() / per_layer.len() as f64
    }

    #[test]
    fn perceptual_matches_direct_convolution() {
        let net = FeatureNet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<ImageF> = (0..2).map(|_| random_image(&mut rng, 16, 16)).collect();
        let b: Vec<ImageF> = (0..2).map(|_| random_image(&mut rng, 16, 16)).collect();
        let fast = loss_perceptual(&net, &a, &b).unwrap();
        let slow = reference_perceptual(&net, &a, &b);
        assert!(fast > 0.0);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        assert!((loss_perceptual(&net, &b, &a).unwrap() - fast).abs() < 1e-15);
        assert_eq!(loss_perceptual(&net, &a, &a).unwrap(), 0.0);
    }
}
