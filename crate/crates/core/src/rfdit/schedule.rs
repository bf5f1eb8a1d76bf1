//! Discrete DDPM forward noising.

use super::codec::Latent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Domain("noise schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
            return Err(Error::Domain(format!("beta {b} outside [0, 1)")));
        }
        let alpha_bars = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    /// Linearly spaced betas from `start` to `end`.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    start
                } else {
                    start + (end - start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::new(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// ᾱ at 1-based step `t`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::Domain(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(self.alpha_bars[t - 1])
    }
}

/// `z_t = sqrt(ᾱ_t) z0 + sqrt(1 - ᾱ_t) noise`.
pub fn forward_noising(z0: &Latent, t: usize, schedule: &NoiseSchedule, noise: &Latent) -> Result<Latent> {
    z0.check_same_shape(noise)?;
    let ab = schedule.alpha_bar(t)?;
    let tokens = z0.tokens() * ab.sqrt() + noise.tokens() * (1.0 - ab).sqrt();
    Latent::from_tokens(z0.shape(), tokens)
}
