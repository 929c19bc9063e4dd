//! Shell envelopes and power-law tail fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries below this fraction of the largest envelope value are treated as zero.
pub const FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Default)]
pub struct Envelope {
    bins: Vec<f64>,
}

impl Envelope {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records |value| at distance `r` (binned by floor).
    #[inline]
    pub fn add(&mut self, r: f64, value: f64) {
        let b = r.floor() as usize;
        if b >= self.bins.len() {
            self.bins.resize(b + 1, 0.0);
        }
        if value > self.bins[b] {
            self.bins[b] = value;
        }
    }

    pub fn merge(&mut self, other: &Envelope) {
        for (b, v) in other.bins.iter().enumerate() {
            self.add(b as f64, *v);
        }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn max(&self) -> f64 {
        self.bins.iter().copied().fold(0.0, f64::max)
    }

    /// Least-squares slope of ln E against ln⟨r⟩ over the outer half of the populated shells.
    pub fn fit(&self) -> Result<DecayFit> {
        let top = self.max();
        if top == 0.0 {
            return Err(Error::EmptyMatrix);
        }
        let last = self.bins.iter().rposition(|v| *v > FLOOR * top).unwrap_or(0);
        self.fit_range((last / 2).max(1), last)
    }

    /// The same fit restricted to shells lo..=hi.
    pub fn fit_range(&self, lo: usize, hi: usize) -> Result<DecayFit> {
        let top = self.max();
        if top == 0.0 {
            return Err(Error::EmptyMatrix);
        }
        let last = hi.min(self.bins.len().saturating_sub(1));
        let pts: Vec<(f64, f64)> = (lo..=last)
            .filter(|b| self.bins[*b] > FLOOR * top)
            .map(|b| ((1.0 + (b * b) as f64).sqrt().ln(), self.bins[b].ln()))
            .collect();
        let envelope: Vec<(f64, f64)> = self.bins.iter().enumerate().map(|(b, v)| (b as f64, *v)).collect();
        if pts.len() < 2 {
            // nothing populated past the first shell: no polynomial tail to measure
            return Ok(DecayFit { n_star: f64::INFINITY, constant: top, residual: 0.0, shells: pts.len(), range: [lo, last], envelope });
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let residual = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / m).sqrt();
        let n_star = -slope;
        let constant = (0..=last)
            .map(|b| self.bins[b] * (1.0 + (b * b) as f64).sqrt().powf(n_star))
            .fold(0.0, f64::max);
        Ok(DecayFit { n_star, constant, residual, shells: pts.len(), range: [lo, last], envelope })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted decay order; +∞ when at most one shell past the origin is populated.
    pub n_star: f64,
    /// sup_r E(r)⟨r⟩^{n★}.
    pub constant: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub shells: usize,
    /// First and last shell used.
    pub range: [usize; 2],
    /// (shell, max |entry|) pairs.
    #[serde(skip)]
    pub envelope: Vec<(f64, f64)>,
}

impl DecayFit {
    /// Refits the stored envelope on another shell range.
    pub fn refit(&self, range: [usize; 2]) -> Result<DecayFit> {
        let mut e = Envelope::new();
        for (b, v) in &self.envelope {
            e.add(*b, *v);
        }
        e.fit_range(range[0], range[1])
    }
}
