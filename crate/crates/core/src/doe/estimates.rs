//! Empirical constants behind the solver: the coercive estimate over an
//! ensemble of right-hand sides, the contraction ladder in `lambda`, the
//! shape of the lower-order bound in `(h, lambda)`, the interpolation
//! inequality for `D^alpha` and the boundedness of `xi^2 (A + xi^2 + lambda)^{-1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{constant_apply, derivative, pointwise, EllipticProblem, ProblemSpec, Solver, SolverSettings};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::grid::{push_flag, Domain, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64};
use crate::opcalc::{fractional_power, verify_phi_positive, MatrixSpec, PositiveOperator, SamplePlan};
use crate::partition::build_dyadic_system;
use crate::spaces::{besov_lions_norm, besov_norm, BesovParams};

/// Result of [`verify_coercivity`] at one `lambda`.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub lambda: C64,
    pub points: usize,
    /// `max (||u''|| + ||A_1 u|| + ||A u||) / ||f||` over the ensemble.
    pub c_hat: f64,
    /// Same with `||A_1 u'||`.
    pub c_hat_derivative: f64,
    pub ratios: Vec<f64>,
    /// Members with `f = 0`.
    pub skipped: usize,
    /// Members whose solve failed.
    pub failures: usize,
    pub flags: Vec<Flag>,
}

/// Solve for every ensemble member at the problem's fixed `lambda` and
/// record the coercivity ratios. Solver failures are counted.
pub fn verify_coercivity(
    problem: &EllipticProblem,
    members: &[SampledFunction],
    settings: &SolverSettings,
) -> Result<CoercivityReport> {
    let solver = Solver::full(problem, &settings.fixed_lambda())?;
    let outcomes: Vec<_> = members
        .par_iter()
        .map(|f| {
            if f.l2_norm() == 0.0 {
                return None;
            }
            Some(solver.solve(f))
        })
        .collect();
    let mut ratios = Vec::new();
    let mut with_derivative: f64 = 0.0;
    let (mut skipped, mut failures) = (0, 0);
    let mut flags = Vec::new();
    for o in outcomes {
        match o {
            None => skipped += 1,
            Some(Err(_)) => failures += 1,
            Some(Ok(r)) => {
                for fl in &r.flags {
                    push_flag(&mut flags, *fl);
                }
                match (r.coercivity.ratio, r.coercivity.ratio_with_derivative) {
                    (Some(a), Some(b)) => {
                        ratios.push(a);
                        with_derivative = with_derivative.max(b);
                    }
                    _ => skipped += 1,
                }
            }
        }
    }
    Ok(CoercivityReport {
        lambda: problem.lambda,
        points: problem.grid().points_per_axis(),
        c_hat: ratios.iter().copied().fold(0.0, f64::max),
        c_hat_derivative: with_derivative,
        ratios,
        skipped,
        failures,
        flags,
    })
}

/// [`verify_coercivity`] along a `lambda` ladder on a grid and its
/// refinement.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityStudy {
    pub lambdas: Vec<f64>,
    pub base: Vec<CoercivityReport>,
    pub refined: Vec<CoercivityReport>,
    /// Largest `|C(2M) - C(M)| / C(M)` over the ladder.
    pub drift: f64,
    /// `max C / min C` over the ladder.
    pub spread: f64,
    pub pass: bool,
}

pub const MAX_COERCIVITY_DRIFT: f64 = 0.02;
pub const MAX_COERCIVITY_SPREAD: f64 = 2.0;

pub fn coercivity_study(
    spec: &ProblemSpec,
    ensemble: &EnsembleSpec,
    grid: &Grid,
    lambdas: &[f64],
    settings: &SolverSettings,
) -> Result<CoercivityStudy> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda ladder".into()));
    }
    let run = |g: &Grid| -> Result<Vec<CoercivityReport>> {
        let members = ensemble.sample(g)?;
        lambdas
            .iter()
            .map(|&l| verify_coercivity(&spec.with_lambda(l).build(g)?, &members, settings))
            .collect()
    };
    let base = run(grid)?;
    let refined = run(&grid.refined())?;
    let drift = base
        .iter()
        .zip(&refined)
        .map(|(a, b)| (b.c_hat - a.c_hat).abs() / a.c_hat)
        .fold(0.0, f64::max);
    let hi = base.iter().map(|r| r.c_hat).fold(0.0, f64::max);
    let lo = base.iter().map(|r| r.c_hat).fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    let pass = base
        .iter()
        .chain(&refined)
        .all(|r| r.c_hat.is_finite() && r.failures == 0 && !r.ratios.is_empty())
        && drift < MAX_COERCIVITY_DRIFT
        && spread < MAX_COERCIVITY_SPREAD;
    Ok(CoercivityStudy {
        lambdas: lambdas.to_vec(),
        base,
        refined,
        drift,
        spread,
        pass,
    })
}

/// Contraction estimate and iteration count along a `lambda` ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionSweep {
    pub lambdas: Vec<f64>,
    pub q_hat: Vec<f64>,
    /// Fixed-point iterations after the first solve; absent when `q_hat >= 1`.
    pub iterations: Vec<Option<usize>>,
    pub residuals: Vec<Option<f64>>,
    /// `q_hat` nonincreasing along the ladder.
    pub monotone: bool,
}

pub fn contraction_sweep(
    spec: &ProblemSpec,
    grid: &Grid,
    lambdas: &[f64],
    settings: &SolverSettings,
) -> Result<ContractionSweep> {
    let fixed = settings.fixed_lambda();
    let mut q_hat = Vec::new();
    let mut iterations = Vec::new();
    let mut residuals = Vec::new();
    for &l in lambdas {
        let p = spec.with_lambda(l).build(grid)?;
        let raw = SolverSettings {
            escalation_threshold: f64::INFINITY,
            ..fixed.clone()
        };
        // Estimate without the q < 1 gate, then solve only when contractive.
        let q = Solver::full(&p, &raw)?.q_hat().unwrap_or(0.0);
        q_hat.push(q);
        if q < 1.0 {
            let r = Solver::full(&p, &fixed)?.solve(&p.f)?;
            iterations.push(Some(r.iterations));
            residuals.push(Some(r.residual));
        } else {
            iterations.push(None);
            residuals.push(None);
        }
    }
    let monotone = q_hat.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    Ok(ContractionSweep {
        lambdas: lambdas.to_vec(),
        q_hat,
        iterations,
        residuals,
        monotone,
    })
}

/// Logarithmic grid of `h` in `[h0 10^{-decades}, h0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HGrid {
    pub h0: f64,
    pub decades: f64,
    pub per_decade: usize,
}

impl Default for HGrid {
    fn default() -> Self {
        HGrid {
            h0: 100.0,
            decades: 8.0,
            per_decade: 8,
        }
    }
}

impl HGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = (self.decades * self.per_decade as f64).round().max(1.0) as usize;
        (0..=n)
            .map(|i| self.h0 * 10f64.powf(-self.decades * (n - i) as f64 / n as f64))
            .collect()
    }

    pub fn doubled(&self) -> Self {
        HGrid {
            per_decade: 2 * self.per_decade,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.h0 > 0.0 && self.h0.is_finite() && self.decades > 0.0 && self.per_decade >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid h grid {self:?}")))
        }
    }
}

/// Fit of `||L_1 u|| <= (c_1 h^mu + c_2 h^{-(1-mu)} / |lambda|) ||(L_0 + lambda) u||`.
#[derive(Debug, Clone, Serialize)]
pub struct LowerOrderReport {
    pub mu: f64,
    pub lambdas: Vec<f64>,
    /// `max ||A_1 u'||_B / ||f||_B` over the ensemble, `u = (L_0 + lambda)^{-1} f`.
    pub rho: Vec<f64>,
    /// `c_1 = c_2`, fitted so the bound is tight at the smallest `lambda`.
    pub c: f64,
    /// Minimum over `h` of the bound divided by `rho`, per `lambda`.
    pub margins: Vec<f64>,
    /// Bound holds for every `(h, lambda)` on the sweep.
    pub holds: bool,
}

pub fn lower_order_shape(
    spec: &ProblemSpec,
    ensemble: &EnsembleSpec,
    grid: &Grid,
    lambdas: &[f64],
    h: &HGrid,
    mu: f64,
) -> Result<LowerOrderReport> {
    if !(mu > 0.0 && mu < 1.0) || lambdas.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "mu = {mu} with {} lambdas",
            lambdas.len()
        )));
    }
    h.validate()?;
    let members = ensemble.sample(grid)?;
    let sys = build_dyadic_system(grid)?;
    let mut rho = Vec::new();
    for &l in lambdas {
        let p = spec.with_lambda(l).build(grid)?;
        let Some(a1) = p.active_a1().cloned() else {
            rho.push(0.0);
            continue;
        };
        let solver = Solver::principal(&p, &SolverSettings::default())?;
        let ratios: Result<Vec<f64>> = members
            .par_iter()
            .filter(|f| f.l2_norm() > 0.0)
            .map(|f| {
                let u = solver.principal_inverse(f)?;
                let du = derivative(&u, 1, &mut Vec::new())?;
                let top = besov_norm(&pointwise(&a1, &du, false), &p.params, &sys)?.value;
                Ok(top / besov_norm(f, &p.params, &sys)?.value)
            })
            .collect();
        rho.push(ratios?.into_iter().fold(0.0, f64::max));
    }
    let hs = h.points();
    let shape = |l: f64| {
        hs.iter()
            .map(|&x| x.powf(mu) + x.powf(-(1.0 - mu)) / l.abs())
            .fold(f64::INFINITY, f64::min)
    };
    let c = rho[0] / shape(lambdas[0]);
    let margins: Vec<f64> = lambdas
        .iter()
        .zip(&rho)
        .map(|(&l, &r)| if r > 0.0 { c * shape(l) / r } else { f64::INFINITY })
        .collect();
    let holds = margins.iter().all(|m| *m >= 1.0 - 1e-9);
    Ok(LowerOrderReport {
        mu,
        lambdas: lambdas.to_vec(),
        rho,
        c,
        margins,
        holds,
    })
}

/// `sup_xi ||xi^2 (A + xi^2 + lambda)^{-1}||` against the sectorial constant.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaBound {
    pub lambda: C64,
    pub sup: f64,
    pub m_hat: f64,
    /// `sup <= m_hat + 1`.
    pub pass: bool,
}

pub fn sigma_bound(op: &PositiveOperator, lambda: C64, grid: &Grid, plan: &SamplePlan) -> Result<SigmaBound> {
    let d = op.dim();
    let rows = op.row_major();
    let mut m = rows.clone();
    let mut sup: f64 = 0.0;
    for n in 0..grid.len() {
        let xi = grid.coords(Domain::Frequency, n)[0];
        m.copy_from_slice(&rows);
        for i in 0..d {
            m[i * d + i] += lambda + xi * xi;
        }
        let inv = linalg::inverse(&m, d)
            .ok_or_else(|| Error::SectorViolation(format!("A + xi^2 + lambda singular at xi = {xi}")))?;
        sup = sup.max(xi * xi * linalg::op_norm(&inv, d));
    }
    let m_hat = verify_phi_positive(op, plan).m_hat;
    Ok(SigmaBound {
        lambda,
        sup,
        m_hat,
        pass: sup <= m_hat + 1.0,
    })
}

/// Parameters of the interpolation inequality
/// `||A^{1-x-mu} D^alpha u||_B <= C [h^mu ||u||_{B^{l}(E(A), E)} + h^{-(1-mu)} ||u||_B]`,
/// `x = alpha / l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolationSetup {
    pub a: MatrixSpec,
    #[serde(default = "super::default_phi")]
    pub phi: f64,
    pub alpha: usize,
    pub l: usize,
    pub mu: f64,
    #[serde(default)]
    pub h: HGrid,
    #[serde(default)]
    pub besov: BesovParams,
}

impl InterpolationSetup {
    fn theta(&self) -> Result<f64> {
        if self.l == 0 || self.alpha > self.l {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= alpha <= l, l >= 1; got alpha = {}, l = {}",
                self.alpha, self.l
            )));
        }
        let x = self.alpha as f64 / self.l as f64;
        if !(self.mu > 0.0 && self.mu <= 1.0 - x + 1e-15) {
            return Err(Error::InvalidParameter(format!(
                "mu = {} not in (0, {}]",
                self.mu,
                1.0 - x
            )));
        }
        self.h.validate()?;
        Ok((1.0 - x - self.mu).max(0.0))
    }
}

/// Per-member terms of the interpolation inequality.
#[derive(Debug, Clone, Serialize)]
pub struct MemberBalance {
    pub lhs: f64,
    /// `||u||_{B^{l}(E(A), E)}`.
    pub lions: f64,
    /// `||u||_B`.
    pub base: f64,
    /// Minimizer of the bracket, refined by a parabola in `log h`.
    pub h_star: f64,
    pub bracket_min: f64,
    /// `lhs / bracket_min`.
    pub ratio: f64,
    /// `h_star` lies strictly inside the sampled range.
    pub interior: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationReport {
    pub theta: f64,
    pub mu: f64,
    pub points: usize,
    pub h_points: usize,
    /// `max lhs / min_h bracket` over the ensemble.
    pub c_mu: f64,
    pub members: Vec<MemberBalance>,
    /// Least-squares slope of `log h*` against `log(lions / base)`.
    pub slope: Option<f64>,
    pub h_star_median: Option<f64>,
    pub skipped: usize,
    pub flags: Vec<Flag>,
}

/// Slope tolerance for the balance point `h* ~ (lions / base)^{-1}`.
pub const SLOPE_TOLERANCE: f64 = 0.15;

/// A member's balance and flags; `None` for a zero member.
type MemberOutcome = Option<(MemberBalance, Vec<Flag>)>;

pub fn verify_interpolation_embedding(
    members: &[SampledFunction],
    setup: &InterpolationSetup,
) -> Result<InterpolationReport> {
    let theta = setup.theta()?;
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let grid = *first.grid();
    let op = PositiveOperator::new(setup.a.to_matrix()?, setup.phi)?;
    let power = linalg::from_dmatrix(&fractional_power(&op, theta)?);
    let sys = build_dyadic_system(&grid)?;
    let hs = setup.h.points();
    let outcomes: Result<Vec<MemberOutcome>> = members
        .par_iter()
        .map(|u| {
            if u.l2_norm() == 0.0 {
                return Ok(None);
            }
            let mut flags = Vec::new();
            let du = derivative(u, setup.alpha, &mut flags)?;
            let lhs = besov_norm(&constant_apply(&power, &du), &setup.besov, &sys)?.value;
            let lions_report = besov_lions_norm(u, setup.l, &op, &setup.besov, &sys)?;
            flags.extend(lions_report.flags);
            let base = besov_norm(u, &setup.besov, &sys)?.value;
            Ok(Some((balance(lhs, lions_report.value, base, setup.mu, &hs), flags)))
        })
        .collect();
    let mut flags = Vec::new();
    let mut balances = Vec::new();
    let mut skipped = 0;
    for o in outcomes? {
        match o {
            None => skipped += 1,
            Some((b, fl)) => {
                fl.into_iter().for_each(|f| push_flag(&mut flags, f));
                balances.push(b);
            }
        }
    }
    let c_mu = balances.iter().map(|b| b.ratio).fold(0.0, f64::max);
    let interior: Vec<&MemberBalance> = balances.iter().filter(|b| b.interior).collect();
    let slope = fit_slope(
        &interior.iter().map(|b| (b.lions / b.base).ln()).collect::<Vec<_>>(),
        &interior.iter().map(|b| b.h_star.ln()).collect::<Vec<_>>(),
    );
    let mut hstars: Vec<f64> = interior.iter().map(|b| b.h_star).collect();
    hstars.sort_by(f64::total_cmp);
    let h_star_median = (!hstars.is_empty()).then(|| hstars[hstars.len() / 2]);
    Ok(InterpolationReport {
        theta,
        mu: setup.mu,
        points: grid.points_per_axis(),
        h_points: hs.len(),
        c_mu,
        members: balances,
        slope,
        h_star_median,
        skipped,
        flags,
    })
}

fn balance(lhs: f64, lions: f64, base: f64, mu: f64, hs: &[f64]) -> MemberBalance {
    let bracket = |h: f64| h.powf(mu) * lions + h.powf(-(1.0 - mu)) * base;
    let values: Vec<f64> = hs.iter().map(|&h| bracket(h)).collect();
    let (i, &min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty h grid");
    let interior = i > 0 && i + 1 < hs.len();
    let h_star = if interior {
        // Vertex of the parabola through three points in log h.
        let (x0, x1, x2) = (hs[i - 1].ln(), hs[i].ln(), hs[i + 1].ln());
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        let den = (x0 - x1) * (y1 - y2) - (x1 - x2) * (y0 - y1);
        if den.abs() > 0.0 {
            let num = (x0 * x0 - x1 * x1) * (y1 - y2) - (x1 * x1 - x2 * x2) * (y0 - y1);
            (0.5 * num / den).clamp(x0, x2).exp()
        } else {
            hs[i]
        }
    } else {
        hs[i]
    };
    MemberBalance {
        lhs,
        lions,
        base,
        h_star,
        bracket_min: min,
        ratio: lhs / min,
        interior,
    }
}

fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 1e-6).then(|| sxy / sxx)
}

/// [`verify_interpolation_embedding`] on a base grid, on a doubled `h` grid
/// and on the refined spatial grid.
#[derive(Debug, Clone, Serialize)]
pub struct InterpolationStudy {
    pub base: InterpolationReport,
    pub h_refined: InterpolationReport,
    pub grid_refined: InterpolationReport,
    /// `max / min` of `c_mu` between the base and each refinement.
    pub drift_h: f64,
    pub drift_grid: f64,
    pub slope_pass: bool,
    pub pass: bool,
}

pub const MAX_INTERPOLATION_DRIFT: f64 = 2.0;

pub fn interpolation_study(
    ensemble: &EnsembleSpec,
    grid: &Grid,
    setup: &InterpolationSetup,
) -> Result<InterpolationStudy> {
    let members = ensemble.sample(grid)?;
    let base = verify_interpolation_embedding(&members, setup)?;
    let dense = InterpolationSetup {
        h: setup.h.doubled(),
        ..setup.clone()
    };
    let h_refined = verify_interpolation_embedding(&members, &dense)?;
    let grid_refined = verify_interpolation_embedding(&ensemble.sample(&grid.refined())?, setup)?;
    let ratio = |a: f64, b: f64| a.max(b) / a.min(b);
    let drift_h = ratio(base.c_mu, h_refined.c_mu);
    let drift_grid = ratio(base.c_mu, grid_refined.c_mu);
    let slope_pass = base.slope.is_some_and(|s| (s + 1.0).abs() <= SLOPE_TOLERANCE);
    let pass = base.c_mu.is_finite()
        && base.c_mu > 0.0
        && drift_h < MAX_INTERPOLATION_DRIFT
        && drift_grid < MAX_INTERPOLATION_DRIFT
        && slope_pass;
    Ok(InterpolationStudy {
        base,
        h_refined,
        grid_refined,
        drift_h,
        drift_grid,
        slope_pass,
        pass,
    })
}
