//! Seeded random test functions: Gaussian mixtures with random centres,
//! widths, amplitudes, fiber directions and optional modulation.
//!
//! Member parameters are drawn sequentially from one ChaCha8 stream and do
//! not depend on the grid, so the same spec sampled on a refined grid gives
//! the same functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Fiber, Grid, SampledFunction};
use crate::linalg::{C64, ZERO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    pub size: usize,
    pub seed: u64,
    /// Fiber dimension `d`.
    pub fiber_dim: usize,
    /// Gaussians per member.
    pub components: usize,
    /// Centres are uniform in `[-center_range, center_range]^N`.
    pub center_range: f64,
    /// Widths are log-uniform in `[sigma_min, sigma_max]`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Modulation frequencies uniform in `[-max_frequency, max_frequency]`;
    /// zero disables modulation.
    pub max_frequency: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            size: 50,
            seed: 20240601,
            fiber_dim: 1,
            components: 3,
            center_range: 4.0,
            sigma_min: 0.4,
            sigma_max: 2.0,
            max_frequency: 0.0,
        }
    }
}

/// One Gaussian bump `a v exp(-|x - c|^2 / (2 sigma^2)) exp(i omega . x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub sigma: f64,
    pub omega: [f64; 2],
    pub direction: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberParams {
    pub bumps: Vec<Bump>,
}

impl MemberParams {
    /// Value at `x` written into `out` (length `d`).
    pub fn eval(&self, x: &[f64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for b in &self.bumps {
            let mut r2 = 0.0;
            let mut phase = 0.0;
            for (a, xa) in x.iter().enumerate() {
                let dx = xa - b.center[a];
                r2 += dx * dx;
                phase += b.omega[a] * xa;
            }
            let g = (-0.5 * r2 / (b.sigma * b.sigma)).exp();
            if g == 0.0 {
                continue;
            }
            let w = C64::from_polar(g, phase);
            for (o, v) in out.iter_mut().zip(&b.direction) {
                *o += w * v;
            }
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fiber_dim >= 1
            && self.components >= 1
            && self.center_range.is_finite()
            && self.center_range >= 0.0
            && self.sigma_min > 0.0
            && self.sigma_max >= self.sigma_min
            && self.sigma_max.is_finite()
            && self.max_frequency.is_finite()
            && self.max_frequency >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid ensemble spec {self:?}")))
        }
    }

    /// Draw member parameters for an `n`-dimensional domain.
    pub fn params(&self, dim: usize) -> Vec<MemberParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = (self.sigma_min.ln(), self.sigma_max.ln());
        (0..self.size)
            .map(|_| {
                let bumps = (0..self.components)
                    .map(|_| {
                        let mut center = [0.0; 2];
                        let mut omega = [0.0; 2];
                        for a in 0..dim {
                            center[a] = rng.gen_range(-1.0..=1.0) * self.center_range;
                            omega[a] = rng.gen_range(-1.0..=1.0) * self.max_frequency;
                        }
                        let sigma = if hi > lo {
                            rng.gen_range(lo..=hi).exp()
                        } else {
                            self.sigma_min
                        };
                        let amplitude = rng.gen_range(0.5..=1.5);
                        let mut direction: Vec<C64> = (0..self.fiber_dim)
                            .map(|_| C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
                            .collect();
                        let norm = crate::linalg::vec_norm(&direction).max(1e-3);
                        direction.iter_mut().for_each(|z| *z *= amplitude / norm);
                        Bump {
                            center,
                            sigma,
                            omega,
                            direction,
                        }
                    })
                    .collect();
                MemberParams { bumps }
            })
            .collect()
    }

    /// Sample every member on `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<SampledFunction>> {
        self.validate()?;
        let fiber = Fiber::Vector(self.fiber_dim);
        self.params(grid.dim())
            .par_iter()
            .map(|p| SampledFunction::from_fn(*grid, Domain::Physical, fiber, |x, out| p.eval(x, out)))
            .collect()
    }
}
