//! Rectified-flow pairs, classifier-free guidance and the Euler sampler.

use super::codec::{Latent, LatentShape};
use crate::error::{Error, Result};

/// `(x_t, v_target)` on the straight path from noise `x0` to data `x1`.
pub fn rf_pair(x0: &Latent, x1: &Latent, t: f64) -> Result<(Latent, Latent)> {
    x0.check_same_shape(x1)?;
    let xt = x0.tokens() * (1.0 - t) + x1.tokens() * t;
    let v = x1.tokens() - x0.tokens();
    Ok((Latent::from_tokens(x0.shape(), xt)?, Latent::from_tokens(x0.shape(), v)?))
}

/// `v_u + w (v_c - v_u)`. The endpoints `w = 0` and `w = 1` return the
/// corresponding input unchanged.
pub fn cfg_combine(v_uncond: &Latent, v_cond: &Latent, w: f64) -> Result<Latent> {
    v_uncond.check_same_shape(v_cond)?;
    if w == 1.0 {
        return Ok(v_cond.clone());
    }
    if w == 0.0 {
        return Ok(v_uncond.clone());
    }
    let tokens = v_uncond.tokens() + &((v_cond.tokens() - v_uncond.tokens()) * w);
    Latent::from_tokens(v_uncond.shape(), tokens)
}

/// A velocity field `v(x, t)`, optionally conditioned.
pub trait VelocityField {
    fn velocity(&self, x: &Latent, t: f64, drop_condition: bool) -> Result<Latent>;

    /// Fields without a conditional branch skip the second evaluation.
    fn is_conditional(&self) -> bool {
        true
    }
}

/// Euler integration from seeded standard-normal noise at `t = 0` to `t = 1`.
pub fn rf_sample(field: &dyn VelocityField, shape: LatentShape, steps: usize, w: f64, seed: u64) -> Result<Latent> {
    if steps == 0 {
        return Err(Error::Domain("sampler needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = Latent::seeded_normal(shape, seed);
    for i in 0..steps {
        let t = i as f64 * dt;
        let v_cond = field.velocity(&x, t, false)?;
        let v = if field.is_conditional() && w != 1.0 {
            let v_uncond = field.velocity(&x, t, true)?;
            cfg_combine(&v_uncond, &v_cond, w)?
        } else {
            v_cond
        };
        x.check_same_shape(&v)?;
        let next = x.tokens() + &(v.tokens() * dt);
        x = Latent::from_tokens(shape, next)?;
        if !x.is_finite() {
            return Err(Error::NonFinite { step: i });
        }
    }
    Ok(x)
}

/// Straight-line field toward a fixed point `c`: `v = (c - x) / (1 - t)`,
/// with `t` clamped to `1 - 1e-6`.
pub struct PointTarget {
    pub target: Latent,
}

impl VelocityField for PointTarget {
    fn velocity(&self, x: &Latent, t: f64, _drop: bool) -> Result<Latent> {
        let t = t.min(1.0 - 1e-6);
        let v = (self.target.tokens() - x.tokens()) / (1.0 - t);
        Latent::from_tokens(x.shape(), v)
    }

    fn is_conditional(&self) -> bool {
        false
    }
}

/// Marginal rectified-flow field for data `N(mean, sigma^2)` and
/// independent standard-normal noise. Its ODE carries `x(0)` to
/// `mean + sigma * x(0)` at `t = 1`.
pub struct GaussianTarget {
    pub mean: Latent,
    pub sigma: f64,
}

impl GaussianTarget {
    pub fn exact_terminal(&self, x0: &Latent) -> Latent {
        let tokens = self.mean.tokens() + &(x0.tokens() * self.sigma);
        Latent::from_tokens(x0.shape(), tokens).expect("shapes match")
    }
}

impl VelocityField for GaussianTarget {
    fn velocity(&self, x: &Latent, t: f64, _drop: bool) -> Result<Latent> {
        let s2 = self.sigma * self.sigma;
        let var = (1.0 - t).powi(2) + t * t * s2;
        let gain = (t * s2 - (1.0 - t)) / var;
        let centered = x.tokens() - &(self.mean.tokens() * t);
        let v = self.mean.tokens() + &(centered * gain);
        Latent::from_tokens(x.shape(), v)
    }

    fn is_conditional(&self) -> bool {
        false
    }
}

/// Always returns zero velocity.
pub struct ZeroField;

impl VelocityField for ZeroField {
    fn velocity(&self, x: &Latent, _t: f64, _drop: bool) -> Result<Latent> {
        Ok(Latent::zeros(x.shape()))
    }
}

pub fn max_abs_diff(a: &Latent, b: &Latent) -> f64 {
    a.tokens()
        .iter()
        .zip(b.tokens())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
