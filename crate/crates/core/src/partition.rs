//! Littlewood-Paley partition of unity on the frequency grid.
//!
//! The generator is `psi(s) = chi(s) / sum_j chi(2^{-j} s)` with the bump
//! `chi(s) = exp(-1 / ((s - 1/2)(2 - s)))` on `(1/2, 2)`. Blocks above
//! `K_max = floor(log2 xi_max)` are folded into the top block so the
//! partition still sums to one at every node.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{forward_ft, inverse_ft, Domain, Grid, SampledFunction};

/// The bump `chi`, zero outside `(1/2, 2)`.
pub fn chi(s: f64) -> f64 {
    if s <= 0.5 || s >= 2.0 {
        0.0
    } else {
        (-1.0 / ((s - 0.5) * (2.0 - s))).exp()
    }
}

/// Dyadic generator, supported in `[1/2, 2]`, with
/// `sum_{k in Z} psi(2^{-k} s) = 1` for `s > 0`.
pub fn psi(s: f64) -> f64 {
    let c = chi(s);
    if c == 0.0 {
        return 0.0;
    }
    // At most one neighbour of s in the dyadic orbit lies in (1/2, 2).
    let other = if s >= 1.0 { chi(0.5 * s) } else { chi(2.0 * s) };
    c / (c + other)
}

/// `phi_k` at radius `r` for a system truncated at `k_max`.
pub fn phi_at(k: usize, r: f64, k_max: usize) -> f64 {
    let r = r.abs();
    if k == k_max {
        let top = 2f64.powi(k_max as i32);
        if r >= top {
            return 1.0;
        }
        if k == 0 {
            return 1.0;
        }
        return psi(r / top);
    }
    if k == 0 {
        if r <= 1.0 {
            1.0
        } else {
            psi(r)
        }
    } else if k > k_max {
        0.0
    } else {
        psi(r / 2f64.powi(k as i32))
    }
}

/// The family `{phi_k}` sampled on a frequency grid.
#[derive(Debug, Clone)]
pub struct DyadicSystem {
    grid: Grid,
    k_max: usize,
    /// `phis[k][n]`, FFT-ordered frequency nodes.
    phis: Vec<Vec<f64>>,
}

impl DyadicSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn phi(&self, k: usize) -> &[f64] {
        &self.phis[k]
    }

    pub fn phis(&self) -> &[Vec<f64>] {
        &self.phis
    }

    /// `phi_k` evaluated at an arbitrary radius.
    pub fn phi_at(&self, k: usize, r: f64) -> f64 {
        phi_at(k, r, self.k_max)
    }

    fn check_block(&self, k: usize) -> Result<()> {
        if k > self.k_max {
            Err(Error::BlockOutOfRange { k, k_max: self.k_max })
        } else {
            Ok(())
        }
    }
}

/// Build the partition for `grid`.
///
/// Rejects grids with fewer than eight frequency samples across `[1/2, 2]`,
/// which cannot resolve block `k = 1`.
pub fn build_dyadic_system(grid: &Grid) -> Result<DyadicSystem> {
    // Frequency nodes k * dxi with 1/2 <= k * dxi <= 2.
    let h = grid.dxi();
    let samples = ((2.0 / h).floor() - (0.5 / h).ceil() + 1.0).max(0.0) as usize;
    if samples < 8 {
        return Err(Error::InvalidGrid(format!(
            "only {samples} frequency samples across [1/2, 2]; enlarge the box"
        )));
    }
    let k_max = grid.xi_max().log2().floor();
    if k_max < 1.0 {
        return Err(Error::InvalidGrid(format!(
            "xi_max = {} resolves no dyadic block",
            grid.xi_max()
        )));
    }
    let k_max = k_max as usize;
    let radii: Vec<f64> = (0..grid.len())
        .map(|n| {
            let xi = grid.coords(Domain::Frequency, n);
            xi.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let phis = (0..=k_max)
        .map(|k| radii.iter().map(|&r| phi_at(k, r, k_max)).collect())
        .collect();
    Ok(DyadicSystem {
        grid: *grid,
        k_max,
        phis,
    })
}

/// `F^{-1}[phi_k f^]` given the transform `hat`.
pub fn block_from_hat(hat: &SampledFunction, k: usize, sys: &DyadicSystem) -> Result<SampledFunction> {
    sys.check_block(k)?;
    if hat.domain() != Domain::Frequency {
        return Err(Error::DomainMismatch { expected: "frequency" });
    }
    if *hat.grid() != sys.grid {
        return Err(Error::GridMismatch);
    }
    let comps = hat.fiber().components();
    let phi = &sys.phis[k];
    let mut out = hat.clone();
    for (n, chunk) in out.values_mut().chunks_mut(comps).enumerate() {
        let w = phi[n];
        chunk.iter_mut().for_each(|z| *z *= w);
    }
    inverse_ft(&out)
}

/// The `k`-th Littlewood-Paley block of a physical-side function.
pub fn dyadic_block(f: &SampledFunction, k: usize, sys: &DyadicSystem) -> Result<SampledFunction> {
    sys.check_block(k)?;
    block_from_hat(&forward_ft(f)?, k, sys)
}

/// All blocks `0..=K_max` from a single forward transform.
pub fn all_blocks(f: &SampledFunction, sys: &DyadicSystem) -> Result<Vec<SampledFunction>> {
    if *f.grid() != sys.grid {
        return Err(Error::GridMismatch);
    }
    let hat = forward_ft(f)?;
    (0..=sys.k_max)
        .into_par_iter()
        .map(|k| block_from_hat(&hat, k, sys))
        .collect()
}

/// Residuals of the listed partition properties, measured on the grid and on
/// a fine radial mesh.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub k_max: usize,
    /// `max |sum_k phi_k - 1|` over frequency nodes.
    pub sum_residual: f64,
    /// `max |psi(s) + psi(s/2) - 1|` on `[1, 2]`.
    pub telescoping_residual: f64,
    /// Largest `phi_k` outside the closure of `I_k`.
    pub support_violation: f64,
    /// Largest `phi_k` on `J_m` with `|m - k| > 1`.
    pub disjointness_violation: f64,
    /// `max |phi_{k-1} + phi_k + phi_{k+1} - 1|` on `supp phi_k`.
    pub neighbour_residual: f64,
    /// Most negative value of any `phi_k` (zero if none).
    pub min_value: f64,
}

impl PartitionReport {
    pub fn pass(&self) -> bool {
        self.sum_residual <= 1e-12
            && self.telescoping_residual <= 1e-12
            && self.support_violation == 0.0
            && self.disjointness_violation == 0.0
            && self.neighbour_residual <= 1e-12
            && self.min_value >= -1e-12
    }
}

/// Check the partition properties of `sys`.
pub fn verify_partition(sys: &DyadicSystem) -> PartitionReport {
    let grid = sys.grid;
    let k_max = sys.k_max;
    let mut sum_residual: f64 = 0.0;
    let mut min_value: f64 = 0.0;
    for n in 0..grid.len() {
        let s: f64 = sys.phis.iter().map(|p| p[n]).sum();
        sum_residual = sum_residual.max((s - 1.0).abs());
        for p in &sys.phis {
            min_value = min_value.min(p[n]);
        }
    }

    // Radial checks on a fine mesh reaching past the top block.
    let r_top = 2f64.powi(k_max as i32 + 2);
    let mesh: Vec<f64> = (0..=200_000).map(|i| r_top * i as f64 / 200_000.0).collect();
    let mut telescoping_residual: f64 = 0.0;
    for i in 0..=10_000 {
        let s = 1.0 + i as f64 / 10_000.0;
        telescoping_residual = telescoping_residual.max((psi(s) + psi(0.5 * s) - 1.0).abs());
    }
    let mut support_violation: f64 = 0.0;
    let mut disjointness_violation: f64 = 0.0;
    let mut neighbour_residual: f64 = 0.0;
    for &r in &mesh {
        let vals: Vec<f64> = (0..=k_max).map(|k| phi_at(k, r, k_max)).collect();
        for (k, &v) in vals.iter().enumerate() {
            // Closure of I_k = [2^{k-1}, 2^{k+1}] (k = 0: [0, 2]; top: unbounded).
            let lo = if k == 0 { 0.0 } else { 2f64.powi(k as i32 - 1) };
            let hi = if k == k_max {
                f64::INFINITY
            } else {
                2f64.powi(k as i32 + 1)
            };
            if r < lo || r > hi {
                support_violation = support_violation.max(v.abs());
            }
            // J_0 = [0, 1], J_m = [2^{m-1}, 2^m]; test the m with
            // |m - k| > 1 containing r.
            if r > 0.0 {
                let m = if r <= 1.0 { 0 } else { r.log2().ceil() as i64 };
                let on_boundary = (r.log2() - r.log2().round()).abs() < 1e-12;
                if (m - k as i64).abs() > 1 && !on_boundary && (k < k_max || m <= k as i64) {
                    disjointness_violation = disjointness_violation.max(v.abs());
                }
            }
            if v > 0.0 {
                let lower = if k > 0 { vals[k - 1] } else { 0.0 };
                let upper = if k < k_max { vals[k + 1] } else { 0.0 };
                neighbour_residual = neighbour_residual.max((lower + v + upper - 1.0).abs());
            }
        }
    }
    PartitionReport {
        k_max,
        sum_residual,
        telescoping_residual,
        support_violation,
        disjointness_violation,
        neighbour_residual,
        min_value,
    }
}

/// Write `s, psi(s)` on `samples` equispaced points of `[1/2, 2]`.
pub fn write_psi_csv<W: Write>(mut w: W, samples: usize) -> io::Result<()> {
    writeln!(w, "s,psi")?;
    let samples = samples.max(2);
    for i in 0..samples {
        let s = 0.5 + 1.5 * i as f64 / (samples - 1) as f64;
        writeln!(w, "{s:.17e},{:.17e}", psi(s))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Fiber;

    #[test]
    fn psi_support_and_peak() {
        assert_eq!(psi(0.5), 0.0);
        assert_eq!(psi(2.0), 0.0);
        assert_eq!(psi(0.4), 0.0);
        assert_eq!(psi(1.0), 1.0);
        assert!(psi(1.3) > 0.0 && psi(1.3) < 1.0);
    }

    #[test]
    fn default_system_properties() {
        let sys = build_dyadic_system(&Grid::default_1d()).unwrap();
        assert_eq!(sys.k_max(), 7);
        let rep = verify_partition(&sys);
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn phi3_vanishes_outside_its_annulus() {
        let sys = build_dyadic_system(&Grid::default_1d()).unwrap();
        assert_eq!(sys.phi_at(3, 32.0), 0.0);
        assert_eq!(sys.phi_at(3, 3.9), 0.0);
        assert!(sys.phi_at(3, 8.0) == 1.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        assert!(build_dyadic_system(&g).is_err());
    }

    #[test]
    fn block_index_checked() {
        let g = Grid::new(1, 16.0, 256).unwrap();
        let sys = build_dyadic_system(&g).unwrap();
        let f = SampledFunction::zeros(g, Domain::Physical, Fiber::Vector(1));
        assert!(matches!(
            dyadic_block(&f, sys.k_max() + 1, &sys),
            Err(Error::BlockOutOfRange { .. })
        ));
    }

    #[test]
    fn two_dimensional_partition() {
        let sys = build_dyadic_system(&Grid::default_2d()).unwrap();
        let rep = verify_partition(&sys);
        assert!(rep.sum_residual <= 1e-12);
        let f = SampledFunction::scalar(*sys.grid(), |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp()).unwrap();
        let blocks = all_blocks(&f, &sys).unwrap();
        let mut sum = SampledFunction::zeros(*sys.grid(), Domain::Physical, Fiber::Vector(1));
        for b in &blocks {
            sum = sum.add(b).unwrap();
        }
        let err = sum.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn psi_csv_has_header() {
        let mut buf = Vec::new();
        write_psi_csv(&mut buf, 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,psi\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
