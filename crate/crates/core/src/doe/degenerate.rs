//! The substitution `tau = \int_0^t dy / gamma(y)`, which turns
//! `gamma d/dt` into `d/dtau`, and the degenerate solver built on it.

use std::cell::Cell;

use serde::Serialize;

use super::{derivative, full_operator, pointwise, solve_full, EllipticProblem, SolveReport, SolverSettings};
use crate::error::{Error, Result};
use crate::grid::{push_flag, Domain, Fiber, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64, ZERO};
use crate::opcalc::PositiveOperator;
use crate::quadrature;
use crate::weights::{Weight, WeightFunction};

/// Cap on the automatically chosen `tau` grid.
pub const MAX_TAU_POINTS: usize = 1 << 18;

/// `tau(t)` tabulated at the physical nodes and at `t = L`.
#[derive(Debug, Clone)]
pub struct DegenerateMap {
    gamma: Weight,
    grid: Grid,
    tau: Vec<f64>,
    /// `Some(c)` for a constant weight, where `tau = t / c` exactly.
    constant: Option<f64>,
}

impl DegenerateMap {
    fn node(&self, j: usize) -> f64 {
        -self.grid.half_width() + j as f64 * self.grid.dx()
    }

    fn cell_integral(&self, a: f64, b: f64) -> f64 {
        quadrature::integrate(|y| 1.0 / self.gamma.value(&[y]), a, b, 1)
    }

    pub fn gamma(&self) -> &Weight {
        &self.gamma
    }

    /// `tau` at the physical nodes.
    pub fn node_tau(&self) -> &[f64] {
        &self.tau[..self.grid.points_per_axis()]
    }

    /// `[tau(-L), tau(L)]`.
    pub fn tau_range(&self) -> (f64, f64) {
        (self.tau[0], self.tau[self.tau.len() - 1])
    }

    pub fn tau(&self, t: f64) -> f64 {
        if let Some(c) = self.constant {
            return t / c;
        }
        let m = self.grid.points_per_axis();
        let j = (((t + self.grid.half_width()) / self.grid.dx()).floor().max(0.0) as usize).min(m - 1);
        self.tau[j] + self.cell_integral(self.node(j), t)
    }

    /// `t(tau)` for `tau` in [`tau_range`](Self::tau_range): bracketing in
    /// the table, then safeguarded Newton steps with `dt/dtau = gamma`.
    pub fn inverse(&self, tau: f64) -> Option<f64> {
        let (lo, hi) = self.tau_range();
        if !(lo..=hi).contains(&tau) {
            return None;
        }
        if let Some(c) = self.constant {
            return Some(tau * c);
        }
        let j = self
            .tau
            .partition_point(|&v| v <= tau)
            .saturating_sub(1)
            .min(self.tau.len() - 2);
        let (a, b) = (self.node(j), self.node(j + 1));
        let (ta, tb) = (self.tau[j], self.tau[j + 1]);
        let mut t = a + (b - a) * (tau - ta) / (tb - ta);
        for _ in 0..60 {
            let g = ta + self.cell_integral(a, t) - tau;
            let step = g * self.gamma.value(&[t]);
            let next = (t - step).clamp(a, b);
            let moved = (next - t).abs();
            t = next;
            if moved <= 1e-15 * t.abs().max(1.0) {
                break;
            }
        }
        Some(t)
    }
}

/// Tabulate `tau(t) = \int_0^t 1/gamma` by 16-point Gauss-Legendre on every
/// grid cell, accumulated outward from the origin node.
pub fn degenerate_transform(gamma: &Weight, grid: &Grid, gamma_min: f64) -> Result<DegenerateMap> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("the substitution is one-dimensional".into()));
    }
    gamma.validate(1)?;
    let m = grid.points_per_axis();
    let constant = match gamma {
        Weight::Constant { value } => Some(*value),
        _ => None,
    };
    let mut map = DegenerateMap {
        gamma: gamma.clone(),
        grid: *grid,
        tau: vec![0.0; m + 1],
        constant,
    };
    if let Some(c) = constant {
        if c < gamma_min {
            return Err(Error::DegenerateWeight(format!(
                "gamma = {c} below gamma_min = {gamma_min}"
            )));
        }
        for j in 0..=m {
            map.tau[j] = map.node(j) / c;
        }
        return Ok(map);
    }
    let smallest = Cell::new(f64::INFINITY);
    let inv = |y: f64| {
        let g = gamma.value(&[y]);
        smallest.set(smallest.get().min(g));
        1.0 / g
    };
    for j in 0..=m {
        inv(map.node(j));
    }
    let o = grid.origin_axis_index();
    for j in o + 1..=m {
        map.tau[j] = map.tau[j - 1] + quadrature::integrate(inv, map.node(j - 1), map.node(j), 1);
    }
    for j in (0..o).rev() {
        map.tau[j] = map.tau[j + 1] - quadrature::integrate(inv, map.node(j), map.node(j + 1), 1);
    }
    let g = smallest.get();
    if g.is_nan() || g < gamma_min {
        return Err(Error::DegenerateWeight(format!(
            "gamma reaches {g:.3e} below gamma_min = {gamma_min:.1e}"
        )));
    }
    if map.tau.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) {
        return Err(Error::DegenerateWeight("tau is not strictly increasing".into()));
    }
    Ok(map)
}

/// Degree-5 Lagrange interpolation from samples at `x0 + j h` using the six
/// nearest nodes; the stencil is shifted inward at the ends.
pub(crate) fn interp6(values: &[C64], comps: usize, x0: f64, h: f64, x: f64, out: &mut [C64]) {
    let n = values.len() / comps;
    let s = (x - x0) / h;
    let start = ((s.floor() as i64) - 2).clamp(0, n as i64 - 6) as usize;
    out.iter_mut().for_each(|z| *z = ZERO);
    for i in 0..6 {
        let mut w = 1.0;
        for k in 0..6 {
            if k != i {
                w *= (s - (start + k) as f64) / (i as f64 - k as f64);
            }
        }
        if w == 0.0 {
            continue;
        }
        let node = &values[(start + i) * comps..(start + i + 1) * comps];
        for (o, v) in out.iter_mut().zip(node) {
            *o += v * w;
        }
    }
}

/// `-(gamma d/dt)^2 u + A_1 (gamma d/dt) u + (A + lambda) u` with spectral
/// `d/dt` on the physical grid.
pub fn degenerate_operator(
    a: &PositiveOperator,
    a1: Option<&SampledFunction>,
    lambda: C64,
    gamma: &Weight,
    u: &SampledFunction,
) -> Result<SampledFunction> {
    if gamma.is_unit() {
        return full_operator(a, a1, lambda, u);
    }
    let mut flags = Vec::new();
    let weigh = |v: &SampledFunction| {
        v.map_nodes(v.fiber(), |n, x, out| {
            let t = v.grid().coords(Domain::Physical, n)[0];
            let g = gamma.value(&[t]);
            for (o, z) in out.iter_mut().zip(x) {
                *o = z * g;
            }
        })
    };
    let d1 = weigh(&derivative(u, 1, &mut flags)?);
    let d2 = weigh(&derivative(&d1, 1, &mut flags)?);
    let rows = a.row_major();
    let mut out = u.map_nodes(u.fiber(), |_, x, o| linalg::matvec(&rows, x, o));
    out = out.combine(linalg::ONE, u, lambda)?.sub(&d2)?;
    if let Some(a1) = a1 {
        out = out.add(&pointwise(a1, &d1, false))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateReport {
    /// Solution at the physical nodes.
    #[serde(skip)]
    pub u: SampledFunction,
    pub tau_range: [f64; 2],
    pub tau_half_width: f64,
    pub tau_points: usize,
    /// Relative `L_2` residual of the original equation at the physical
    /// nodes, with `(gamma d/dt)^i u` evaluated as `d^i/dtau^i` of the
    /// transformed solution.
    pub residual: f64,
    /// The non-degenerate solve in the `tau` variable.
    pub transformed: SolveReport,
    pub flags: Vec<Flag>,
}

/// Solve the degenerate equation by passing to `tau`, solving there with
/// [`solve_full`], and mapping back with 6th-order interpolation.
///
/// The `tau` grid is centred, covers `[tau(-L), tau(L)]` plus 18 decay
/// lengths `1 / Re sqrt(a + lambda)` on each side (and at least the
/// physical box, so the frequency spacing does not coarsen), and by default is fine
/// enough to resolve the physical cells where `|f|` exceeds `1e-4` of its peak. The
/// right-hand side is extended by zero outside the image of the box and the
/// coefficient by its boundary values.
pub fn solve_degenerate(problem: &EllipticProblem, settings: &SolverSettings) -> Result<DegenerateReport> {
    problem.validate()?;
    let grid = *problem.grid();
    if problem.gamma.is_unit() {
        let r = solve_full(problem, settings)?;
        return Ok(DegenerateReport {
            u: r.u.clone(),
            tau_range: [-grid.half_width(), grid.half_width()],
            tau_half_width: grid.half_width(),
            tau_points: grid.points_per_axis(),
            residual: r.residual,
            flags: r.flags.clone(),
            transformed: r,
        });
    }
    let map = degenerate_transform(&problem.gamma, &grid, settings.gamma_min)?;
    let (lo, hi) = map.tau_range();
    let decay = problem
        .a
        .eigenvalues()
        .iter()
        .map(|z| (z + problem.lambda).sqrt().re)
        .fold(f64::INFINITY, f64::min);
    if decay.is_nan() || decay <= 0.0 {
        return Err(Error::SectorViolation(format!(
            "no decay for lambda = {}: Re sqrt(a + lambda) = {decay}",
            problem.lambda
        )));
    }
    let half_width = (lo.abs().max(hi.abs()) + 18.0 / decay).max(grid.half_width());
    let mut flags = Vec::new();
    let points = match settings.tau_points {
        Some(p) => p,
        None => {
            let peak = problem.f.max_norm();
            let tau = &map.tau;
            let spacing = (0..grid.points_per_axis())
                .filter(|&j| problem.f.node_norm(j) > 1e-4 * peak)
                .map(|j| tau[j + 1] - tau[j])
                .fold(f64::INFINITY, f64::min);
            let want = if spacing.is_finite() {
                (2.0 * half_width / spacing).ceil() as usize
            } else {
                0
            };
            let p = want.next_power_of_two().max(grid.points_per_axis());
            if p > MAX_TAU_POINTS {
                push_flag(&mut flags, Flag::UnderResolved);
            }
            p.min(MAX_TAU_POINTS)
        }
    };
    let tgrid = Grid::new(1, half_width, points)?;
    let d = problem.a.dim();
    let (x0, h) = (-grid.half_width(), grid.dx());
    let f_tau = SampledFunction::from_fn(tgrid, Domain::Physical, Fiber::Vector(d), |x, out| {
        match map.inverse(x[0]) {
            Some(t) => interp6(problem.f.values(), d, x0, h, t, out),
            None => out.iter_mut().for_each(|z| *z = ZERO),
        }
    })?;
    let a1_tau = match problem.active_a1() {
        Some(a1) => Some(SampledFunction::from_fn(
            tgrid,
            Domain::Physical,
            Fiber::Matrix(d),
            |x, out| {
                let t = map.inverse(x[0].clamp(lo, hi)).expect("clamped into range");
                interp6(a1.values(), d * d, x0, h, t, out)
            },
        )?),
        None => None,
    };
    let sub = EllipticProblem {
        a: problem.a.clone(),
        a1: a1_tau,
        lambda: problem.lambda,
        f: f_tau,
        gamma: Weight::unit(),
        params: problem.params.clone(),
        mu: problem.mu,
    };
    let transformed = solve_full(&sub, settings)?;
    for fl in &transformed.flags {
        push_flag(&mut flags, *fl);
    }
    let lambda = transformed.lambda;

    let w = &transformed.u;
    let w1 = derivative(w, 1, &mut flags)?;
    let w2 = derivative(w, 2, &mut flags)?;
    let (y0, k) = (-tgrid.half_width(), tgrid.dx());
    let node_tau = map.node_tau();
    let mut u = SampledFunction::zeros(grid, Domain::Physical, Fiber::Vector(d));
    let mut res = SampledFunction::zeros(grid, Domain::Physical, Fiber::Vector(d));
    let rows = problem.a.row_major();
    let (mut v0, mut v1, mut v2, mut tmp) = (vec![ZERO; d], vec![ZERO; d], vec![ZERO; d], vec![ZERO; d]);
    for (j, &s) in node_tau.iter().enumerate() {
        interp6(w.values(), d, y0, k, s, &mut v0);
        interp6(w1.values(), d, y0, k, s, &mut v1);
        interp6(w2.values(), d, y0, k, s, &mut v2);
        u.values_mut()[j * d..(j + 1) * d].copy_from_slice(&v0);
        linalg::matvec(&rows, &v0, &mut tmp);
        let r = &mut res.values_mut()[j * d..(j + 1) * d];
        for i in 0..d {
            r[i] = tmp[i] + lambda * v0[i] - v2[i] - problem.f.node(j)[i];
        }
        if let Some(a1) = problem.active_a1() {
            linalg::matvec(a1.node(j), &v1, &mut tmp);
            for i in 0..d {
                r[i] += tmp[i];
            }
        }
    }
    let f_l2 = problem.f.l2_norm();
    let residual = super::relative(res.l2_norm(), f_l2);
    Ok(DegenerateReport {
        u,
        tau_range: [lo, hi],
        tau_half_width: half_width,
        tau_points: points,
        residual,
        transformed,
        flags,
    })
}
