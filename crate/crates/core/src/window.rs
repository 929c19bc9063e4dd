//! The quadratic-partition window 𝔤 with Σ_α 𝔤(· − α)² ≡ 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RADIUS: f64 = 0.99;

/// Tensor-product window built from χ(t) = exp(−1/(1 − (t/r)²)) on |t| < r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameWindow {
    pub d: usize,
    pub r: f64,
}

impl FrameWindow {
    pub fn build(d: usize, r: f64) -> Result<Self> {
        if !(r < 1.0) {
            return Err(Error::InvalidWeight(format!("window radius {r} must be < 1")));
        }
        // below 1/2 the translates leave gaps where the normalization vanishes
        if !(r > 0.5) {
            return Err(Error::InvalidWeight(format!("window radius {r} leaves zeros in Σχ(·−α)²")));
        }
        Ok(Self { d, r })
    }

    pub fn standard(d: usize) -> Self {
        Self { d, r: DEFAULT_RADIUS }
    }

    #[inline]
    pub fn bump(&self, t: f64) -> f64 {
        let u = t / self.r;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    }

    /// Σ_α χ(t − α)², which is 1-periodic and bounded below.
    #[inline]
    pub fn normalization(&self, t: f64) -> f64 {
        let f = t.floor();
        let mut s = 0.0;
        for k in -1..=2 {
            let c = self.bump(t - (f + k as f64));
            s += c * c;
        }
        s
    }

    /// One-dimensional factor of 𝔤.
    #[inline]
    pub fn g1(&self, t: f64) -> f64 {
        if t.abs() >= self.r {
            return 0.0;
        }
        self.bump(t) / self.normalization(t).sqrt()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().map(|t| self.g1(*t)).product()
    }

    /// max over the samples of |Σ_α 𝔤(t − α)² − 1| along one axis.
    pub fn partition_residual(&self, samples: &[f64]) -> f64 {
        samples
            .iter()
            .map(|t| {
                let f = t.floor();
                let s: f64 = (-1..=2).map(|k| self.g1(t - (f + k as f64)).powi(2)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}
