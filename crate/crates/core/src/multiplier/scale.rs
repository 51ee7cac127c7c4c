//! The scale-invariant Besov size `M_{p,gamma}(m) = inf_a ||m(a .)||_{B^{N/p}_{p,1,gamma}}`
//! and the per-block check of the Besov multiplier theorem.
//!
//! A symbol on the frequency grid of `G` is treated as a physical-side
//! function on [`Grid::dual`], whose nodes are exactly those frequencies.

use rayon::prelude::*;
use serde::Serialize;

use super::{apply_sampled, Symbol};
use crate::error::{Error, Result};
use crate::grid::{
    forward_ft, push_flag, top_octave_fraction, Domain, Fiber, Flag, Grid, SampledFunction, DEFAULT_BOUNDARY_THRESHOLD,
};
use crate::linalg::{self, ZERO};
use crate::partition::{build_dyadic_system, phi_at, DyadicSystem};
use crate::spaces::{besov_norm, BesovParams};
use crate::weights::Weight;

/// Default scale range: `a = 2^j`, `|j| <= 8`.
pub const DEFAULT_SCALE_RANGE: i32 = 8;

/// Scales whose samples put more than this fraction of spectral energy in
/// the top octave of the dual grid are treated as unresolved.
pub const MAX_TOP_OCTAVE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ScaleEntry {
    pub a: f64,
    pub norm: f64,
    pub boundary_ratio: f64,
    pub top_octave: f64,
    /// Resolved and untruncated, so eligible for the minimum.
    pub included: bool,
}

/// Result of [`estimate_m_p_gamma`].
#[derive(Debug, Clone, Serialize)]
pub struct ScaleReport {
    pub symbol: String,
    pub p: f64,
    /// Minimum over the eligible scales; an upper bound on the infimum.
    pub m_hat: f64,
    pub best_scale: f64,
    pub scales: Vec<ScaleEntry>,
    pub flags: Vec<Flag>,
}

fn besov_size(g: &SampledFunction, params: &BesovParams, sys: &DyadicSystem, a: f64) -> Result<ScaleEntry> {
    let boundary_ratio = g.boundary_ratio();
    let top_octave = top_octave_fraction(&forward_ft(g)?);
    let norm = besov_norm(g, params, sys)?.value;
    let included = boundary_ratio <= DEFAULT_BOUNDARY_THRESHOLD && top_octave <= MAX_TOP_OCTAVE;
    Ok(ScaleEntry {
        a,
        norm,
        boundary_ratio,
        top_octave,
        included,
    })
}

/// `min_{a = 2^j, |j| <= j_max} ||m(a .)||_{B^{N/p}_{p,1,gamma}}` with the
/// operator norm as fiber norm.
///
/// Scales at which `m(a .)` is truncated by the box (including scales that
/// move its support off the box entirely) or unresolved by the grid are
/// skipped; if every scale is, the minimum is taken over all of them
/// and the report is flagged. Sample-only symbols are evaluated at `a = 1`.
pub fn estimate_m_p_gamma(m: &Symbol, p: f64, weight: &Weight, grid: &Grid, j_max: i32) -> Result<ScaleReport> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "exponent p = {p} must be finite and >= 1"
        )));
    }
    if j_max < 0 {
        return Err(Error::InvalidParameter(format!(
            "scale range {j_max} must be non-negative"
        )));
    }
    let dual = grid.dual();
    let sys = build_dyadic_system(&dual)?;
    let params = BesovParams::new(grid.dim() as f64 / p, p, 1.0).with_weight(weight.clone());
    params.validate(grid.dim())?;
    let d = m.fiber_dim();
    let mut flags = vec![Flag::UpperBound];
    let scales: Vec<ScaleEntry> = match m {
        Symbol::ClosedForm { f, .. } => (-j_max..=j_max)
            .into_par_iter()
            .map(|j| {
                let a = 2f64.powi(j);
                let mut point = [0.0; 2];
                let g = SampledFunction::from_fn(dual, Domain::Physical, Fiber::Matrix(d), |x, out| {
                    for (t, v) in point.iter_mut().zip(x) {
                        *t = a * v;
                    }
                    f.eval(&point[..x.len()], out)
                })?;
                besov_size(&g, &params, &sys, a)
            })
            .collect::<Result<_>>()?,
        Symbol::Sampled { samples, .. } => {
            if samples.grid() != grid {
                return Err(Error::GridMismatch);
            }
            flags.push(Flag::SampleOnlySymbol);
            vec![besov_size(&samples.frequency_as_physical(), &params, &sys, 1.0)?]
        }
    };
    // A scale that moves the whole support off the box reads as zero; it is
    // truncated, not small.
    let any_nonzero = scales.iter().any(|s| s.norm > 0.0);
    let mut scales = scales;
    for s in &mut scales {
        if any_nonzero && s.norm == 0.0 {
            s.included = false;
        }
    }
    let pick = |only_included: bool| {
        scales
            .iter()
            .filter(|s| s.included || !only_included)
            .min_by(|x, y| x.norm.total_cmp(&y.norm))
            .map(|s| (s.norm, s.a))
    };
    let (m_hat, best_scale) = match pick(true) {
        Some(v) => v,
        None => {
            if scales.iter().any(|s| s.boundary_ratio > DEFAULT_BOUNDARY_THRESHOLD) {
                push_flag(&mut flags, Flag::TruncationSuspect);
            }
            if scales.iter().any(|s| s.top_octave > MAX_TOP_OCTAVE) {
                push_flag(&mut flags, Flag::UnderResolved);
            }
            pick(false).expect("at least one scale")
        }
    };
    Ok(ScaleReport {
        symbol: m.name().into(),
        p,
        m_hat,
        best_scale,
        scales,
        flags,
    })
}

/// `phi_k m` for the dyadic system `sys`.
pub fn block_symbol(m: &Symbol, k: usize, sys: &DyadicSystem) -> Result<Symbol> {
    if k > sys.k_max() {
        return Err(Error::BlockOutOfRange { k, k_max: sys.k_max() });
    }
    let k_max = sys.k_max();
    let name = format!("phi_{k}*{}", m.name());
    match m {
        Symbol::ClosedForm { f, .. } => {
            let f = f.clone();
            Ok(Symbol::closed(name, f.fiber_dim(), move |xi, out| {
                let r = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
                let w = phi_at(k, r, k_max);
                if w == 0.0 {
                    out.iter_mut().for_each(|z| *z = ZERO);
                } else {
                    f.eval(xi, out);
                    out.iter_mut().for_each(|z| *z *= w);
                }
            }))
        }
        Symbol::Sampled { samples, .. } => {
            if samples.grid() != sys.grid() {
                return Err(Error::GridMismatch);
            }
            let phi = sys.phi(k);
            let mut values = samples.values().to_vec();
            let comps = samples.fiber().components();
            for (n, chunk) in values.chunks_mut(comps).enumerate() {
                chunk.iter_mut().for_each(|z| *z *= phi[n]);
            }
            Symbol::sampled(
                name,
                SampledFunction::from_values(*sys.grid(), Domain::Frequency, samples.fiber(), values)?,
            )
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockConstant {
    pub k: usize,
    pub m_hat: f64,
    pub best_scale: f64,
    pub flags: Vec<Flag>,
}

/// Result of [`verify_besov_multiplier_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct BesovBoundReport {
    pub symbol: String,
    pub params: BesovParams,
    pub p: f64,
    /// `M^_{p,gamma}(phi_k m)` for `k = 0..K_max-1`.
    pub per_block: Vec<BlockConstant>,
    /// `max_k M^_{p,gamma}(phi_k m)`.
    pub a_hat: f64,
    /// Largest over smallest positive per-block constant.
    pub block_spread: f64,
    /// `||T_m f||_B / ||f||_B` per member; zero-norm members are skipped.
    pub ratios: Vec<f64>,
    pub empirical: f64,
    /// `empirical / a_hat`, a lower bound on the theorem's constant.
    pub kappa: f64,
    pub skipped: usize,
    pub flags: Vec<Flag>,
}

/// Per-block constants, empirical Besov operator norm, and their ratio.
///
/// The top block `K_max` is left out of the per-block maximum: it collects
/// all frequencies above `2^{K_max}` and is not a dyadic piece.
pub fn verify_besov_multiplier_bound(
    m: &Symbol,
    params: &BesovParams,
    p: f64,
    weight: &Weight,
    members: &[SampledFunction],
    sys: &DyadicSystem,
    j_max: i32,
) -> Result<BesovBoundReport> {
    let grid = sys.grid();
    params.validate(grid.dim())?;
    let per_block: Vec<BlockConstant> = (0..sys.k_max())
        .map(|k| {
            let rep = estimate_m_p_gamma(&block_symbol(m, k, sys)?, p, weight, grid, j_max)?;
            Ok(BlockConstant {
                k,
                m_hat: rep.m_hat,
                best_scale: rep.best_scale,
                flags: rep.flags,
            })
        })
        .collect::<Result<_>>()?;
    let a_hat = per_block.iter().map(|b| b.m_hat).fold(0.0, f64::max);
    let positive: Vec<f64> = per_block.iter().map(|b| b.m_hat).filter(|&v| v > 0.0).collect();
    let block_spread = if positive.is_empty() {
        1.0
    } else {
        positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let samples = m.sample(grid)?;
    let pairs: Vec<(f64, f64)> = members
        .par_iter()
        .map(|f| -> Result<(f64, f64)> {
            let src = besov_norm(f, params, sys)?.value;
            let out = besov_norm(&apply_sampled(&samples, f)?, params, sys)?.value;
            Ok((src, out))
        })
        .collect::<Result<_>>()?;
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for (src, out) in pairs {
        if src > 0.0 {
            ratios.push(out / src);
        } else {
            skipped += 1;
        }
    }
    let empirical = ratios.iter().copied().fold(0.0, f64::max);
    let kappa = if a_hat > 0.0 { empirical / a_hat } else { f64::NAN };
    let mut flags = vec![Flag::LowerBound];
    for b in &per_block {
        for &fl in &b.flags {
            if fl != Flag::UpperBound {
                push_flag(&mut flags, fl);
            }
        }
    }
    Ok(BesovBoundReport {
        symbol: m.name().into(),
        params: params.clone(),
        p,
        per_block,
        a_hat,
        block_spread,
        ratios,
        empirical,
        kappa,
        skipped,
        flags,
    })
}

/// Sup over the frequency nodes of `||m(xi)||`.
pub fn symbol_sup(m: &Symbol, grid: &Grid) -> Result<f64> {
    let s = m.sample(grid)?;
    let d = m.fiber_dim();
    Ok(s.values()
        .chunks(d * d)
        .map(|c| linalg::op_norm(c, d))
        .fold(0.0, f64::max))
}
