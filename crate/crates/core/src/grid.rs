use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on the extended phase coordinate, endpoints included.
///
/// Wavefunctions vanish one spacing outside either end (Dirichlet).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseGrid {
    pub phi_min: f64,
    pub phi_max: f64,
    pub n: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self {
            phi_min: -6.0 * PI,
            phi_max: 10.0 * PI,
            n: 4096,
        }
    }
}

pub const MIN_POINTS: usize = 16;
/// Minimum window for the double-well problem: both wells plus decay tails.
pub const MIN_SPAN: f64 = 8.0 * PI;

impl PhaseGrid {
    /// Grid suitable for the flux-biased loop; enforces the 8π window.
    pub fn new(phi_min: f64, phi_max: f64, n: usize) -> Result<Self> {
        let g = Self::custom(phi_min, phi_max, n)?;
        if g.span() < MIN_SPAN * (1.0 - 1e-12) {
            return Err(Error::domain(format!(
                "phase window {:.4} rad is narrower than 8π",
                g.span()
            )));
        }
        Ok(g)
    }

    /// Any window, only `n >= 16` and a positive spacing are required.
    pub fn custom(phi_min: f64, phi_max: f64, n: usize) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::domain(format!("grid needs at least {MIN_POINTS} points, got {n}")));
        }
        if !(phi_max > phi_min) || !phi_min.is_finite() || !phi_max.is_finite() {
            return Err(Error::domain(format!(
                "invalid phase window [{phi_min}, {phi_max}]"
            )));
        }
        Ok(Self { phi_min, phi_max, n })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.phi_min, self.phi_max, self.n).map(|_| ())
    }

    pub fn span(&self) -> f64 {
        self.phi_max - self.phi_min
    }

    pub fn spacing(&self) -> f64 {
        self.span() / (self.n - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.phi_min + j as f64 * self.spacing()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n).map(move |j| self.phi_min + j as f64 * h)
    }

    /// Width of the equivalent hard-wall box, `(n + 1) h`.
    pub fn box_width(&self) -> f64 {
        (self.n + 1) as f64 * self.spacing()
    }

    /// Same window with `factor` times as many intervals; nodes of `self`
    /// remain nodes of the refined grid.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n: (self.n - 1) * factor + 1,
            ..*self
        }
    }

    /// Same spacing with `pad` extra radians on each side (rounded to whole
    /// intervals).
    pub fn widened(&self, pad: f64) -> Self {
        let h = self.spacing();
        let extra = (pad / h).round() as usize;
        Self {
            phi_min: self.phi_min - extra as f64 * h,
            phi_max: self.phi_max + extra as f64 * h,
            n: self.n + 2 * extra,
        }
    }
}
