//! Derivative conditions on symbols: the weighted Mikhlin and Hörmander
//! conditions and the `L_u` block bounds that imply the per-block
//! `M_{p,gamma}` hypothesis.
//!
//! Closed-form symbols are differentiated by 9-point central differences,
//! starting from a step proportional to `max(1, |xi|)` and halving it until
//! two successive estimates agree; sampled symbols by 7-point differences on
//! the frequency grid, one-sided near the edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Symbol, SymbolFn, SymbolSpec};
use crate::error::{Error, Result};
use crate::grid::{push_flag, Domain, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64, ZERO};
use crate::partition::build_dyadic_system;
use crate::quadrature::push_panel;
use crate::spaces::exponent;
use crate::weights::{Weight, WeightFunction};

/// Finite-difference weights for derivatives of order `0..=m` at `z` on the
/// nodes `x` (Fornberg's recursion). Row `k` holds the order-`k` weights.
pub(crate) fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

const CENTRAL_HALF_WIDTH: i32 = 4;
const STEP_FACTOR: f64 = 0.02;
const MAX_HALVINGS: usize = 12;
const STEP_AGREEMENT: f64 = 1e-6;

fn central_weights(order: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (-CENTRAL_HALF_WIDTH..=CENTRAL_HALF_WIDTH).map(f64::from).collect();
    fornberg(0.0, &nodes, order).pop().unwrap()
}

/// All multi-indices of length `dim` with `|alpha| <= l`, by increasing order.
pub(crate) fn multi_indices(dim: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for order in 0..=l {
        if dim == 1 {
            out.push(vec![order]);
        } else {
            for a in (0..=order).rev() {
                out.push(vec![a, order - a]);
            }
        }
    }
    out
}

fn fd_derivative(f: &dyn SymbolFn, xi: &[f64], alpha: &[usize], step_scale: f64, out: &mut [C64]) {
    let d = f.fiber_dim();
    let order: usize = alpha.iter().sum();
    if order == 0 {
        f.eval(xi, out);
        return;
    }
    let r = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
    let h = step_scale * STEP_FACTOR * r.max(1.0);
    let stencils: Vec<Option<Vec<f64>>> = alpha
        .iter()
        .map(|&o| (o > 0).then(|| central_weights(o).into_iter().map(|w| w / h.powi(o as i32)).collect()))
        .collect();
    let width = (2 * CENTRAL_HALF_WIDTH + 1) as usize;
    let counts: Vec<usize> = stencils.iter().map(|s| if s.is_some() { width } else { 1 }).collect();
    let total: usize = counts.iter().product();
    out.iter_mut().for_each(|z| *z = ZERO);
    let mut point = xi.to_vec();
    let mut buf = vec![ZERO; d * d];
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for (a, s) in stencils.iter().enumerate() {
            let i = rem % counts[a];
            rem /= counts[a];
            match s {
                Some(weights) => {
                    w *= weights[i];
                    point[a] = xi[a] + (i as f64 - CENTRAL_HALF_WIDTH as f64) * h;
                }
                None => point[a] = xi[a],
            }
        }
        if w == 0.0 {
            continue;
        }
        f.eval(&point, &mut buf);
        for (o, v) in out.iter_mut().zip(&buf) {
            *o += v * w;
        }
    }
}

/// [`fd_derivative`] with the step halved until successive estimates agree
/// to `STEP_AGREEMENT`; an oscillating symbol such as `exp(i h xi)` needs
/// steps well below `|xi| / 50`.
fn adaptive_derivative(f: &dyn SymbolFn, xi: &[f64], alpha: &[usize], step_scale: f64, out: &mut [C64]) {
    let d = f.fiber_dim();
    let mut fine = vec![ZERO; d * d];
    let mut scale = step_scale;
    fd_derivative(f, xi, alpha, scale, out);
    if alpha.iter().all(|&a| a == 0) {
        return;
    }
    for _ in 0..MAX_HALVINGS {
        scale *= 0.5;
        fd_derivative(f, xi, alpha, scale, &mut fine);
        let diff: Vec<C64> = out.iter().zip(&fine).map(|(a, b)| a - b).collect();
        let size = linalg::op_norm(out, d).max(linalg::op_norm(&fine, d));
        out.copy_from_slice(&fine);
        if size <= 1e-12 || linalg::op_norm(&diff, d) <= STEP_AGREEMENT * size {
            return;
        }
    }
}

/// `D^alpha m(xi)` of a closed-form symbol, row-major.
pub fn closed_form_derivative(m: &Symbol, xi: &[f64], alpha: &[usize]) -> Result<Vec<C64>> {
    match m {
        Symbol::ClosedForm { f, .. } => {
            let d = f.fiber_dim();
            let mut out = vec![ZERO; d * d];
            adaptive_derivative(f.as_ref(), xi, alpha, 1.0, &mut out);
            Ok(out)
        }
        Symbol::Sampled { .. } => Err(Error::InvalidParameter(
            "pointwise derivatives need a closed-form symbol".into(),
        )),
    }
}

/// Derivative of sampled frequency data along every axis, using `width`
/// consecutive nodes in ascending frequency order.
fn sampled_derivative(samples: &SampledFunction, alpha: &[usize], width: usize) -> Vec<C64> {
    let grid = *samples.grid();
    let comps = samples.fiber().components();
    let m = grid.points_per_axis();
    let half = m / 2;
    let mut values = samples.values().to_vec();
    for (axis, &order) in alpha.iter().enumerate() {
        if order == 0 {
            continue;
        }
        let nodes: Vec<f64> = (0..width).map(|i| i as f64).collect();
        let scale = grid.dxi().powi(order as i32);
        let tables: Vec<Vec<f64>> = (0..width)
            .map(|z| {
                fornberg(z as f64, &nodes, order)
                    .pop()
                    .unwrap()
                    .into_iter()
                    .map(|w| w / scale)
                    .collect()
            })
            .collect();
        let lines = if grid.dim() == 1 { 1 } else { m };
        let mut next = vec![ZERO; values.len()];
        let mut line = vec![ZERO; m * comps];
        for other in 0..lines {
            let storage = |i: usize| -> usize {
                let s = (i + half) % m;
                if grid.dim() == 1 {
                    s
                } else if axis == 0 {
                    grid.flat_index([s, other])
                } else {
                    grid.flat_index([other, s])
                }
            };
            for i in 0..m {
                let n = storage(i);
                line[i * comps..(i + 1) * comps].copy_from_slice(&values[n * comps..(n + 1) * comps]);
            }
            for i in 0..m {
                let start = i.saturating_sub(width / 2).min(m - width);
                let w = &tables[i - start];
                let n = storage(i);
                let dst = &mut next[n * comps..(n + 1) * comps];
                for (j, &wj) in w.iter().enumerate() {
                    let src = &line[(start + j) * comps..(start + j + 1) * comps];
                    for (o, v) in dst.iter_mut().zip(src) {
                        *o += v * wj;
                    }
                }
            }
        }
        values = next;
    }
    values
}

/// Operator norms of `D^alpha m` at every frequency node of `grid`.
fn derivative_norms(m: &Symbol, grid: &Grid, alpha: &[usize], step_scale: f64) -> Result<Vec<f64>> {
    let d = m.fiber_dim();
    match m {
        Symbol::ClosedForm { f, .. } => Ok((0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![ZERO; d * d],
                |buf, n| {
                    let xi = grid.coords(Domain::Frequency, n);
                    adaptive_derivative(f.as_ref(), &xi[..grid.dim()], alpha, step_scale, buf);
                    linalg::op_norm(buf, d)
                },
            )
            .collect()),
        Symbol::Sampled { samples, .. } => {
            if samples.grid() != grid {
                return Err(Error::GridMismatch);
            }
            let width = if step_scale < 1.0 { 5 } else { 7 };
            let values = sampled_derivative(samples, alpha, width);
            Ok(values.chunks(d * d).map(|c| linalg::op_norm(c, d)).collect())
        }
    }
}

/// One term of a derivative condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionTerm {
    pub alpha: Vec<usize>,
    /// Annulus inner radius `R`; `None` for the pointwise (Mikhlin) term or
    /// the central ball `|t| <= 2` (Hörmander).
    pub radius: Option<f64>,
    pub value: f64,
    /// Node attaining the maximum (Mikhlin only).
    pub at: Option<Vec<f64>>,
}

/// Outcome of a Mikhlin or Hörmander check on one grid.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub symbol: String,
    pub p: f64,
    /// Highest derivative order `l = ceil(N/p) + 1`.
    pub order: usize,
    pub a_hat: f64,
    pub bound: Option<f64>,
    pub pass: bool,
    pub terms: Vec<ConditionTerm>,
    pub points_per_axis: usize,
    pub half_width: f64,
    pub flags: Vec<Flag>,
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "exponent p = {p} must be finite and >= 1"
        )))
    }
}

fn derivative_order(dim: usize, p: f64) -> usize {
    (dim as f64 / p).ceil() as usize + 1
}

fn verdict(a_hat: f64, bound: Option<f64>) -> bool {
    a_hat.is_finite() && bound.is_none_or(|b| a_hat <= b)
}

/// Weighted Mikhlin condition:
/// `A^ = max_{|alpha| <= l} max_t gamma(t)^{1/p} (1 + |t|)^{|alpha|} ||D^alpha m(t)||`
/// over the frequency nodes of `grid`.
///
/// Nodes where the weight is not finite are skipped and flagged.
pub fn check_mikhlin(m: &Symbol, p: f64, weight: &Weight, bound: Option<f64>, grid: &Grid) -> Result<ConditionReport> {
    check_p(p)?;
    weight.validate(grid.dim())?;
    let l = derivative_order(grid.dim(), p);
    let mut flags = vec![Flag::LowerBound];
    let gamma: Vec<f64> = (0..grid.len())
        .map(|n| {
            let xi = grid.coords(Domain::Frequency, n);
            weight.value(&xi[..grid.dim()]).powf(1.0 / p)
        })
        .collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        push_flag(&mut flags, Flag::DegeneratePoint);
    }
    let mut terms = Vec::new();
    let mut a_hat: f64 = 0.0;
    for alpha in multi_indices(grid.dim(), l) {
        let order: usize = alpha.iter().sum();
        let norms = derivative_norms(m, grid, &alpha, 1.0)?;
        let mut best = 0.0;
        let mut arg = 0;
        for (n, (&v, &g)) in norms.iter().zip(&gamma).enumerate() {
            if !g.is_finite() {
                continue;
            }
            let xi = grid.coords(Domain::Frequency, n);
            let r = xi[..grid.dim()].iter().map(|t| t * t).sum::<f64>().sqrt();
            let val = g * (1.0 + r).powi(order as i32) * v;
            if val > best || val.is_nan() {
                best = val;
                arg = n;
                if val.is_nan() {
                    break;
                }
            }
        }
        let noise_floor = 1e-9 * a_hat;
        if order > 0 && best > noise_floor && best.is_finite() && !derivative_resolved(m, grid, &alpha, &norms, arg)? {
            push_flag(&mut flags, Flag::DerivativeUnresolved);
        }
        a_hat = if best.is_nan() { f64::NAN } else { a_hat.max(best) };
        let xi = grid.coords(Domain::Frequency, arg);
        terms.push(ConditionTerm {
            alpha,
            radius: None,
            value: best,
            at: Some(xi[..grid.dim()].to_vec()),
        });
    }
    let a_hat = if a_hat.is_nan() { f64::INFINITY } else { a_hat };
    Ok(ConditionReport {
        condition: "mikhlin".into(),
        symbol: m.name().into(),
        p,
        order: l,
        a_hat,
        bound,
        pass: verdict(a_hat, bound),
        terms,
        points_per_axis: grid.points_per_axis(),
        half_width: grid.half_width(),
        flags,
    })
}

/// Compare the derivative at node `n` with a second, coarser-stencil or
/// halved-step estimate.
fn derivative_resolved(m: &Symbol, grid: &Grid, alpha: &[usize], norms: &[f64], n: usize) -> Result<bool> {
    let reference = norms[n];
    let other = match m {
        Symbol::ClosedForm { f, .. } => {
            let d = f.fiber_dim();
            let mut buf = vec![ZERO; d * d];
            let xi = grid.coords(Domain::Frequency, n);
            adaptive_derivative(f.as_ref(), &xi[..grid.dim()], alpha, 0.5, &mut buf);
            linalg::op_norm(&buf, d)
        }
        Symbol::Sampled { .. } => derivative_norms(m, grid, alpha, 0.5)?[n],
    };
    Ok((other - reference).abs() <= 1e-3 * reference)
}

/// Fraction of the cell of side `h` centred at `x` lying in
/// `{r_in <= |t| <= r_out}`.
fn cell_fraction(x: &[f64], h: f64, r_in: f64, r_out: f64) -> f64 {
    let overlap = |a: f64, b: f64, lo: f64, hi: f64| (b.min(hi) - a.max(lo)).max(0.0);
    if x.len() == 1 {
        let (a, b) = (x[0] - 0.5 * h, x[0] + 0.5 * h);
        let len = if r_in == 0.0 {
            overlap(a, b, -r_out, r_out)
        } else {
            overlap(a, b, r_in, r_out) + overlap(a, b, -r_out, -r_in)
        };
        return len / h;
    }
    let near = |c: f64| {
        if c.abs() <= 0.5 * h {
            0.0
        } else {
            c.abs() - 0.5 * h
        }
    };
    let far = |c: f64| c.abs() + 0.5 * h;
    let dmin = (near(x[0]).powi(2) + near(x[1]).powi(2)).sqrt();
    let dmax = (far(x[0]).powi(2) + far(x[1]).powi(2)).sqrt();
    if dmin >= r_in && dmax <= r_out {
        return 1.0;
    }
    if dmin > r_out || dmax < r_in {
        return 0.0;
    }
    const SUB: usize = 8;
    let mut inside = 0;
    for i in 0..SUB {
        for j in 0..SUB {
            let u = x[0] + ((i as f64 + 0.5) / SUB as f64 - 0.5) * h;
            let v = x[1] + ((j as f64 + 0.5) / SUB as f64 - 0.5) * h;
            let r = (u * u + v * v).sqrt();
            if r >= r_in && r <= r_out {
                inside += 1;
            }
        }
    }
    inside as f64 / (SUB * SUB) as f64
}

/// Weighted Hörmander condition: the central term
/// `[\int_{|t|<=2} ||D^alpha m||^p gamma]^{1/p}` and the annulus terms
/// `R^{|alpha|} [R^{-N} \int_{R<=|t|<=4R} ||D^alpha m||^p gamma]^{1/p}`
/// for `R = 2^j`, `j = 0..=K_max-2`; `A^` is the largest term.
///
/// Integrals use node values on cells clipped exactly to the region (1-D)
/// or by 8x8 sub-sampling of boundary cells (2-D).
pub fn check_hormander(
    m: &Symbol,
    p: f64,
    weight: &Weight,
    bound: Option<f64>,
    grid: &Grid,
) -> Result<ConditionReport> {
    check_p(p)?;
    weight.validate(grid.dim())?;
    let l = derivative_order(grid.dim(), p);
    let k_max = build_dyadic_system(grid)?.k_max();
    let dim = grid.dim();
    let h = grid.dxi();
    let mut flags = vec![Flag::LowerBound];
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.coords(Domain::Frequency, n)).collect();
    let gamma: Vec<f64> = coords.iter().map(|x| weight.value(&x[..dim])).collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        push_flag(&mut flags, Flag::DegeneratePoint);
    }
    let mut regions: Vec<(Option<f64>, f64, f64)> = vec![(None, 0.0, 2.0)];
    for j in 0..=k_max.saturating_sub(2) {
        let r = 2f64.powi(j as i32);
        regions.push((Some(r), r, 4.0 * r));
    }
    let fractions: Vec<Vec<(usize, f64)>> = regions
        .iter()
        .map(|&(_, r_in, r_out)| {
            coords
                .iter()
                .enumerate()
                .filter_map(|(n, x)| {
                    let f = cell_fraction(&x[..dim], h, r_in, r_out);
                    (f > 0.0).then_some((n, f))
                })
                .collect()
        })
        .collect();
    let cell = h.powi(dim as i32);
    let mut terms = Vec::new();
    let mut a_hat: f64 = 0.0;
    for alpha in multi_indices(dim, l) {
        let order: usize = alpha.iter().sum();
        let norms = derivative_norms(m, grid, &alpha, 1.0)?;
        for (&(radius, _, _), cells) in regions.iter().zip(&fractions) {
            let mut acc = 0.0;
            for &(n, frac) in cells {
                if gamma[n].is_finite() && norms[n] > 0.0 {
                    acc += norms[n].powf(p) * gamma[n] * frac * cell;
                }
            }
            let value = match radius {
                None => acc.powf(1.0 / p),
                Some(r) => r.powi(order as i32) * (acc / r.powi(dim as i32)).powf(1.0 / p),
            };
            let value = if value.is_nan() { f64::INFINITY } else { value };
            a_hat = a_hat.max(value);
            terms.push(ConditionTerm {
                alpha: alpha.clone(),
                radius,
                value,
                at: None,
            });
        }
    }
    Ok(ConditionReport {
        condition: "hormander".into(),
        symbol: m.name().into(),
        p,
        order: l,
        a_hat,
        bound,
        pass: verdict(a_hat, bound),
        terms,
        points_per_axis: grid.points_per_axis(),
        half_width: grid.half_width(),
        flags,
    })
}

/// How successive grids of a refinement study are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refinement {
    /// [`Grid::extended`]: same spacing, twice the box, so the frequency
    /// spacing halves. Exposes singularities at finite frequencies.
    #[default]
    Extend,
    /// [`Grid::refined`]: same box, twice the points, so the frequency range
    /// doubles. Exposes growth at infinity.
    Refine,
}

impl Refinement {
    pub fn next(self, grid: &Grid) -> Grid {
        match self {
            Refinement::Extend => grid.extended(),
            Refinement::Refine => grid.refined(),
        }
    }
}

/// A condition evaluated on a sequence of successively refined grids.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub mode: Refinement,
    pub levels: Vec<ConditionReport>,
    /// Largest ratio `A^_{i+1} / A^_i` between consecutive levels.
    pub growth: f64,
    /// `A^` on the finest grid over `A^` on the coarsest.
    pub total_growth: f64,
    /// Every level passes and `growth < 2`.
    pub pass: bool,
}

/// Maximum tolerated growth of a constant per grid doubling.
pub const MAX_REFINEMENT_GROWTH: f64 = 2.0;

/// Run `check` for the symbol built from `spec` on `grid` and `levels`
/// successive refinements of it.
pub fn refinement_study<F>(
    spec: &SymbolSpec,
    grid: &Grid,
    levels: usize,
    mode: Refinement,
    check: F,
) -> Result<RefinementReport>
where
    F: Fn(&Symbol, &Grid) -> Result<ConditionReport>,
{
    let mut reports = Vec::with_capacity(levels + 1);
    let mut g = *grid;
    for i in 0..=levels {
        if i > 0 {
            g = mode.next(&g);
        }
        reports.push(check(&spec.build(&g)?, &g)?);
    }
    let ratio = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            1.0
        } else if a == 0.0 {
            f64::INFINITY
        } else {
            b / a
        }
    };
    let growth = reports
        .windows(2)
        .map(|w| ratio(w[0].a_hat, w[1].a_hat))
        .fold(1.0, f64::max);
    let total_growth = ratio(reports[0].a_hat, reports[reports.len() - 1].a_hat);
    let pass = reports.iter().all(|r| r.pass) && growth < MAX_REFINEMENT_GROWTH;
    Ok(RefinementReport {
        mode,
        levels: reports,
        growth,
        total_growth,
        pass,
    })
}

/// `L_u` bounds on the dyadic pieces:
/// `||gamma^{1/p} D^alpha m|_{I_0}||_{L_u}` and
/// `||gamma^{1/p} D^alpha [m(2^{k-1} .)]|_{I_1}||_{L_u}`, `k = 1..=k_max`,
/// with `I_0 = {|t| <= 2}` and `I_1 = {1 <= |t| <= 4}`.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaBounds {
    #[serde(with = "exponent")]
    pub u: f64,
    pub order: usize,
    /// Bound on `I_0`, maximized over `alpha`.
    pub a0: f64,
    /// Bounds for `k = 1..=k_max`, maximized over `alpha`.
    pub per_k: Vec<f64>,
    pub a_hat: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

/// Quadrature nodes and weights on `{r_in <= |t| <= r_out}`: Gauss-Legendre
/// panels in 1-D, Gauss-Legendre in `r` times the trapezoid rule in angle in 2-D.
fn region_rule(dim: usize, r_in: f64, r_out: f64) -> Vec<([f64; 2], f64)> {
    const PANELS: usize = 6;
    const ANGLES: usize = 64;
    let mut radial = Vec::new();
    let step = (r_out - r_in) / PANELS as f64;
    for i in 0..PANELS {
        push_panel(r_in + i as f64 * step, r_in + (i + 1) as f64 * step, &mut radial);
    }
    let mut out = Vec::new();
    if dim == 1 {
        for &(r, w) in &radial {
            out.push(([r, 0.0], w));
            out.push(([-r, 0.0], w));
        }
    } else {
        let dtheta = 2.0 * std::f64::consts::PI / ANGLES as f64;
        for &(r, w) in &radial {
            for a in 0..ANGLES {
                let th = a as f64 * dtheta;
                out.push(([r * th.cos(), r * th.sin()], w * r * dtheta));
            }
        }
    }
    out
}

/// Derivative bounds for `u = p` or `u = inf` on `dim`-dimensional space.
pub fn lemma_bounds(
    m: &Symbol,
    dim: usize,
    p: f64,
    weight: &Weight,
    u: f64,
    k_max: usize,
    bound: Option<f64>,
) -> Result<LemmaBounds> {
    check_p(p)?;
    weight.validate(dim)?;
    if u != p && !u.is_infinite() {
        return Err(Error::InvalidParameter(format!(
            "u = {u} must equal p = {p} or be infinite"
        )));
    }
    if !m.is_closed_form() {
        return Err(Error::InvalidParameter("block bounds need a closed-form symbol".into()));
    }
    let l = derivative_order(dim, p);
    let alphas = multi_indices(dim, l);
    let d = m.fiber_dim();
    let eval = |sym: &Symbol, rule: &[([f64; 2], f64)]| -> Result<f64> {
        let Symbol::ClosedForm { f, .. } = sym else {
            unreachable!()
        };
        let mut worst: f64 = 0.0;
        for alpha in &alphas {
            let vals: Vec<(f64, f64)> = rule
                .par_iter()
                .map_init(
                    || vec![ZERO; d * d],
                    |buf, (t, w)| {
                        adaptive_derivative(f.as_ref(), &t[..dim], alpha, 1.0, buf);
                        (weight.value(&t[..dim]).powf(1.0 / p) * linalg::op_norm(buf, d), *w)
                    },
                )
                .collect();
            let v = if u.is_infinite() {
                vals.iter().map(|&(v, _)| v).fold(0.0, f64::max)
            } else {
                vals.iter().map(|&(v, w)| v.powf(u) * w).sum::<f64>().powf(1.0 / u)
            };
            worst = worst.max(if v.is_nan() { f64::INFINITY } else { v });
        }
        Ok(worst)
    };
    let i0 = region_rule(dim, 0.0, 2.0);
    let i1 = region_rule(dim, 1.0, 4.0);
    let a0 = eval(m, &i0)?;
    let mut per_k = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mk = m.dilated(2f64.powi(k as i32 - 1)).expect("closed form");
        per_k.push(eval(&mk, &i1)?);
    }
    let a_hat = per_k.iter().copied().fold(a0, f64::max);
    Ok(LemmaBounds {
        u,
        order: l,
        a0,
        per_k,
        a_hat,
        bound,
        pass: verdict(a_hat, bound),
    })
}
