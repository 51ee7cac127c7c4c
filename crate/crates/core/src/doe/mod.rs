//! Spectral solvers for the second-order operator equation on the line
//!
//! ```text
//! -(gamma(t) d/dt)^2 u + A_1(t) (gamma(t) d/dt) u + (A + lambda) u = f.
//! ```
//!
//! The principal part `L_0 + lambda = -d^2/dt^2 + A + lambda` is inverted
//! frequency by frequency. The first-order term `L_1 u = A_1 u'` is handled
//! by the fixed-point iteration `u_{n+1} = (L_0 + lambda)^{-1}(f - A_1 u_n')`
//! after the contraction estimate `||L_1 (L_0 + lambda)^{-1}|| < 1` has been
//! checked by power iteration. A weight `gamma` is removed by the
//! substitution `tau = \int_0^t 1/gamma` (see [`solve_degenerate`]).

mod degenerate;
mod estimates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_ft, inverse_ft, push_flag, spectral_derivative, Domain, Fiber, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64, ZERO};
use crate::opcalc::{fractional_power, MatrixSpec, PositiveOperator};
use crate::partition::{build_dyadic_system, DyadicSystem};
use crate::spaces::{besov_norm, BesovParams};
use crate::weights::Weight;

pub use degenerate::{degenerate_operator, degenerate_transform, solve_degenerate, DegenerateMap, DegenerateReport};
pub use estimates::{
    coercivity_study, contraction_sweep, interpolation_study, lower_order_shape, sigma_bound, verify_coercivity,
    verify_interpolation_embedding, CoercivityReport, CoercivityStudy, ContractionSweep, HGrid, InterpolationReport,
    InterpolationSetup, InterpolationStudy, LowerOrderReport, MemberBalance, SigmaBound,
};

/// Matrix coefficient `A_1(t)` of the first-order term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    #[default]
    Zero,
    Constant {
        matrix: MatrixSpec,
    },
    /// `amplitude exp(-(t / width)^2) B`, `B` the identity when omitted.
    Gaussian {
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        matrix: Option<MatrixSpec>,
    },
}

fn one() -> f64 {
    1.0
}

impl CoefficientSpec {
    /// Samples on the physical nodes, `None` for the zero coefficient.
    pub fn sample(&self, grid: &Grid, d: usize) -> Result<Option<SampledFunction>> {
        let (profile, b): (Box<dyn Fn(f64) -> f64>, Vec<C64>) = match self {
            CoefficientSpec::Zero => return Ok(None),
            CoefficientSpec::Constant { matrix } => (Box::new(|_| 1.0), matrix_rows(matrix, d)?),
            CoefficientSpec::Gaussian {
                amplitude,
                width,
                matrix,
            } => {
                if !(width.is_finite() && *width > 0.0 && amplitude.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian coefficient amplitude {amplitude}, width {width}"
                    )));
                }
                let b = match matrix {
                    Some(m) => matrix_rows(m, d)?,
                    None => linalg::identity(d),
                };
                let (a, w) = (*amplitude, *width);
                (Box::new(move |t: f64| a * (-(t / w) * (t / w)).exp()), b)
            }
        };
        let f = SampledFunction::from_fn(*grid, Domain::Physical, Fiber::Matrix(d), |x, out| {
            let s = profile(x[0]);
            for (o, v) in out.iter_mut().zip(&b) {
                *o = v * s;
            }
        })?;
        Ok(Some(f))
    }
}

fn matrix_rows(m: &MatrixSpec, d: usize) -> Result<Vec<C64>> {
    let mat = m.to_matrix()?;
    if mat.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "coefficient is {}x{}, operator is {d}x{d}",
            mat.nrows(),
            mat.nrows()
        )));
    }
    Ok(linalg::from_dmatrix(&mat))
}

/// Right-hand side generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `f(t) = exp(-((t - center) / width)^2) v`, `v` all ones when omitted.
    Gaussian {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    /// `f := (L + lambda) u*` for the Gaussian `u*` with these parameters, so
    /// the exact solution is known.
    Manufactured {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Gaussian {
            center: 0.0,
            width: 1.0,
            direction: None,
        }
    }
}

fn gaussian_vector(
    grid: &Grid,
    d: usize,
    center: f64,
    width: f64,
    direction: &Option<Vec<f64>>,
) -> Result<SampledFunction> {
    let v = direction.clone().unwrap_or_else(|| vec![1.0; d]);
    if v.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "direction of length {} for d = {d}",
            v.len()
        )));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidParameter(format!("width {width}")));
    }
    SampledFunction::from_fn(*grid, Domain::Physical, Fiber::Vector(d), |x, out| {
        let g = (-((x[0] - center) / width).powi(2)).exp();
        for (o, c) in out.iter_mut().zip(&v) {
            *o = C64::new(g * c, 0.0);
        }
    })
}

/// Problem description as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub a: MatrixSpec,
    /// Sector angle of `A`.
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default)]
    pub a1: CoefficientSpec,
    pub lambda: f64,
    #[serde(default)]
    pub lambda_im: f64,
    #[serde(default)]
    pub f: SourceSpec,
    /// Degeneration weight `gamma` in `(gamma d/dt)`.
    #[serde(default)]
    pub gamma: Weight,
    #[serde(default)]
    pub besov: BesovParams,
    /// Exponent in the hypothesis `A_1 A^{-(1/2 - mu)} in L_inf`.
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_phi() -> f64 {
    std::f64::consts::FRAC_PI_2
}

fn default_mu() -> f64 {
    0.25
}

impl ProblemSpec {
    pub fn scalar(a: f64, lambda: f64) -> Self {
        ProblemSpec {
            a: MatrixSpec(vec![vec![[a, 0.0]]]),
            phi: default_phi(),
            a1: CoefficientSpec::Zero,
            lambda,
            lambda_im: 0.0,
            f: SourceSpec::default(),
            gamma: Weight::unit(),
            besov: BesovParams::default(),
            mu: default_mu(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ProblemSpec {
            lambda,
            lambda_im: 0.0,
            ..self.clone()
        }
    }

    pub fn fiber_dim(&self) -> usize {
        self.a.0.len()
    }

    pub fn build(&self, grid: &Grid) -> Result<EllipticProblem> {
        let a = PositiveOperator::new(self.a.to_matrix()?, self.phi)?;
        let d = a.dim();
        let a1 = self.a1.sample(grid, d)?;
        let lambda = C64::new(self.lambda, self.lambda_im);
        let f = match &self.f {
            SourceSpec::Gaussian {
                center,
                width,
                direction,
            } => gaussian_vector(grid, d, *center, *width, direction)?,
            SourceSpec::Manufactured { .. } => {
                let u = self.exact_solution(grid)?.expect("manufactured source");
                degenerate_operator(&a, a1.as_ref(), lambda, &self.gamma, &u)?
            }
        };
        let problem = EllipticProblem {
            a,
            a1,
            lambda,
            f,
            gamma: self.gamma.clone(),
            params: self.besov.clone(),
            mu: self.mu,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// The known solution of a manufactured problem.
    pub fn exact_solution(&self, grid: &Grid) -> Result<Option<SampledFunction>> {
        match &self.f {
            SourceSpec::Manufactured {
                center,
                width,
                direction,
            } => Ok(Some(gaussian_vector(
                grid,
                self.fiber_dim(),
                *center,
                *width,
                direction,
            )?)),
            SourceSpec::Gaussian { .. } => Ok(None),
        }
    }
}

/// `-(gamma d/dt)^2 u + A_1 (gamma d/dt) u + (A + lambda) u = f` on a
/// one-dimensional grid.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub a: PositiveOperator,
    /// Matrix-valued samples of `A_1(t)`; `None` is the zero coefficient.
    pub a1: Option<SampledFunction>,
    pub lambda: C64,
    pub f: SampledFunction,
    pub gamma: Weight,
    pub params: BesovParams,
    pub mu: f64,
}

impl EllipticProblem {
    pub fn new(a: PositiveOperator, lambda: C64, f: SampledFunction) -> Self {
        EllipticProblem {
            a,
            a1: None,
            lambda,
            f,
            gamma: Weight::unit(),
            params: BesovParams::default(),
            mu: default_mu(),
        }
    }

    pub fn with_a1(mut self, a1: SampledFunction) -> Self {
        self.a1 = Some(a1);
        self
    }

    pub fn with_gamma(mut self, gamma: Weight) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_f(&self, f: SampledFunction) -> Self {
        EllipticProblem { f, ..self.clone() }
    }

    pub fn grid(&self) -> &Grid {
        self.f.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.f.grid();
        if grid.dim() != 1 {
            return Err(Error::InvalidParameter("the equation is posed on the line".into()));
        }
        if self.f.domain() != Domain::Physical {
            return Err(Error::DomainMismatch { expected: "physical" });
        }
        let d = self.a.dim();
        if self.f.fiber() != Fiber::Vector(d) {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side {:?} for a {d}x{d} operator",
                self.f.fiber()
            )));
        }
        if let Some(a1) = &self.a1 {
            if a1.grid() != grid || a1.domain() != Domain::Physical {
                return Err(Error::GridMismatch);
            }
            if a1.fiber() != Fiber::Matrix(d) {
                return Err(Error::DimensionMismatch(format!("coefficient {:?}", a1.fiber())));
            }
        }
        if !(self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {}", self.lambda)));
        }
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return Err(Error::InvalidParameter(format!("mu = {} not in (0, 1/2)", self.mu)));
        }
        self.params.validate(1)
    }

    /// The coefficient, or `None` when it vanishes identically.
    fn active_a1(&self) -> Option<&SampledFunction> {
        self.a1.as_ref().filter(|a1| a1.values().iter().any(|z| *z != ZERO))
    }
}

/// Knobs for [`solve_full`] and [`solve_degenerate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Multiply `lambda` by 10 while the contraction estimate is at least
    /// `escalation_threshold`.
    pub escalate: bool,
    pub max_escalations: usize,
    pub escalation_threshold: f64,
    /// Stop when `||u_{n+1} - u_n||_B <= tolerance ||u_1||_B`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub power_iterations: usize,
    pub power_tolerance: f64,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
    /// Smallest admissible value of `gamma` on the truncated line.
    pub gamma_min: f64,
    /// Points of the `tau` grid; chosen from the data when absent.
    pub tau_points: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            escalate: true,
            max_escalations: 4,
            escalation_threshold: 0.9,
            tolerance: 1e-10,
            max_iterations: 200,
            power_iterations: 100,
            power_tolerance: 1e-6,
            seed: 7,
            gamma_min: 1e-6,
            tau_points: None,
        }
    }
}

impl SolverSettings {
    pub fn fixed_lambda(&self) -> Self {
        SolverSettings {
            escalate: false,
            ..self.clone()
        }
    }
}

/// The three terms of the coercive estimate and `||A_1 u'||`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CoercivityTerms {
    pub second_derivative: f64,
    pub a1_u: f64,
    pub a1_du: f64,
    pub a_u: f64,
    pub f: f64,
    /// `(||u''|| + ||A_1 u|| + ||A u||) / ||f||`; absent for `f = 0`.
    pub ratio: Option<f64>,
    /// Same with `||A_1 u'||` in place of `||A_1 u||`.
    pub ratio_with_derivative: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: SampledFunction,
    pub lambda_requested: C64,
    /// `lambda` actually used after escalation.
    pub lambda: C64,
    pub escalations: usize,
    /// Power-iteration estimate of `||L_1 (L_0 + lambda)^{-1}||` on `L_2`;
    /// absent for the principal part.
    pub q_hat: Option<f64>,
    pub iterations: usize,
    /// `||u_{n+1} - u_n||_B` per iteration.
    pub increments: Vec<f64>,
    /// `||(L + lambda) u - f||_{L_2} / ||f||_{L_2}`.
    pub residual: f64,
    /// Same ratio in the problem's Besov norm.
    pub residual_besov: f64,
    pub coercivity: CoercivityTerms,
    /// `sup_t ||A_1(t) A^{-(1/2 - mu)}||`.
    pub coefficient_bound: Option<f64>,
    pub flags: Vec<Flag>,
}

/// Frequency samples of `(A + xi^2 + lambda)^{-1}`.
struct PrincipalInverse {
    d: usize,
    inv: Vec<C64>,
}

impl PrincipalInverse {
    fn new(a: &PositiveOperator, lambda: C64, grid: &Grid) -> Result<Self> {
        let d = a.dim();
        let rows = a.row_major();
        let mut inv = Vec::with_capacity(grid.len() * d * d);
        let mut m = rows.clone();
        for n in 0..grid.len() {
            let xi = grid.coords(Domain::Frequency, n)[0];
            m.copy_from_slice(&rows);
            for i in 0..d {
                m[i * d + i] += lambda + xi * xi;
            }
            let r = linalg::inverse(&m, d).ok_or_else(|| {
                Error::SectorViolation(format!("A + xi^2 + lambda is singular at xi = {xi}, lambda = {lambda}"))
            })?;
            inv.extend(r);
        }
        Ok(PrincipalInverse { d, inv })
    }

    fn apply(&self, f: &SampledFunction, adjoint: bool) -> Result<SampledFunction> {
        let d = self.d;
        let mut hat = forward_ft(f)?;
        let mut tmp = vec![ZERO; d];
        let mut adj = vec![ZERO; d * d];
        for (n, chunk) in hat.values_mut().chunks_mut(d).enumerate() {
            let m = &self.inv[n * d * d..(n + 1) * d * d];
            if adjoint {
                linalg::adjoint(m, d, &mut adj);
                linalg::matvec(&adj, chunk, &mut tmp);
            } else {
                linalg::matvec(m, chunk, &mut tmp);
            }
            chunk.copy_from_slice(&tmp);
        }
        inverse_ft(&hat)
    }
}

/// `M(t) v(t)` node by node, or `M(t)^* v(t)`.
fn pointwise(m: &SampledFunction, v: &SampledFunction, adjoint: bool) -> SampledFunction {
    let d = m.fiber().dim();
    let mut adj = vec![ZERO; d * d];
    v.map_nodes(v.fiber(), |n, x, out| {
        if adjoint {
            linalg::adjoint(m.node(n), d, &mut adj);
            linalg::matvec(&adj, x, out);
        } else {
            linalg::matvec(m.node(n), x, out);
        }
    })
}

/// `B v(t)` for a constant row-major matrix `B`.
fn constant_apply(b: &[C64], v: &SampledFunction) -> SampledFunction {
    v.map_nodes(v.fiber(), |_, x, out| linalg::matvec(b, x, out))
}

fn derivative(u: &SampledFunction, order: usize, flags: &mut Vec<Flag>) -> Result<SampledFunction> {
    let d = spectral_derivative(u, &[order])?;
    for fl in d.flags {
        push_flag(flags, fl);
    }
    Ok(d.value)
}

/// `-u'' + A_1 u' + (A + lambda) u` with spectral derivatives.
pub fn full_operator(
    a: &PositiveOperator,
    a1: Option<&SampledFunction>,
    lambda: C64,
    u: &SampledFunction,
) -> Result<SampledFunction> {
    let mut flags = Vec::new();
    let u2 = derivative(u, 2, &mut flags)?;
    let mut out = constant_apply(&a.row_major(), u).combine(linalg::ONE, u, lambda)?;
    out = out.sub(&u2)?;
    if let Some(a1) = a1 {
        let du = derivative(u, 1, &mut flags)?;
        out = out.add(&pointwise(a1, &du, false))?;
    }
    Ok(out)
}

/// Everything that does not depend on the right-hand side: the final
/// `lambda`, the frequency inverse and the contraction estimate.
pub(crate) struct Solver {
    problem: EllipticProblem,
    lambda: C64,
    escalations: usize,
    inv: PrincipalInverse,
    q_hat: Option<f64>,
    sys: DyadicSystem,
    settings: SolverSettings,
    flags: Vec<Flag>,
}

impl Solver {
    pub(crate) fn principal(problem: &EllipticProblem, settings: &SolverSettings) -> Result<Self> {
        problem.validate()?;
        let grid = *problem.grid();
        Ok(Solver {
            problem: EllipticProblem {
                a1: None,
                ..problem.clone()
            },
            lambda: problem.lambda,
            escalations: 0,
            inv: PrincipalInverse::new(&problem.a, problem.lambda, &grid)?,
            q_hat: None,
            sys: build_dyadic_system(&grid)?,
            settings: settings.clone(),
            flags: Vec::new(),
        })
    }

    pub(crate) fn full(problem: &EllipticProblem, settings: &SolverSettings) -> Result<Self> {
        problem.validate()?;
        let Some(a1) = problem.active_a1() else {
            return Solver::principal(problem, settings);
        };
        let grid = *problem.grid();
        let mut lambda = problem.lambda;
        let mut escalations = 0;
        let mut flags = Vec::new();
        let (inv, q) = loop {
            let inv = PrincipalInverse::new(&problem.a, lambda, &grid)?;
            let q = contraction_estimate(&inv, a1, settings, &mut flags)?;
            if q < settings.escalation_threshold || !settings.escalate || escalations >= settings.max_escalations {
                break (inv, q);
            }
            lambda *= 10.0;
            escalations += 1;
        };
        if q >= 1.0 {
            return Err(Error::NotContractive {
                q_hat: q,
                lambda: lambda.norm(),
            });
        }
        Ok(Solver {
            problem: problem.clone(),
            lambda,
            escalations,
            inv,
            q_hat: Some(q),
            sys: build_dyadic_system(&grid)?,
            settings: settings.clone(),
            flags,
        })
    }

    pub(crate) fn q_hat(&self) -> Option<f64> {
        self.q_hat
    }

    /// `(L_0 + lambda)^{-1} f`.
    pub(crate) fn principal_inverse(&self, f: &SampledFunction) -> Result<SampledFunction> {
        self.inv.apply(f, false)
    }

    pub(crate) fn solve(&self, f: &SampledFunction) -> Result<SolveReport> {
        let p = &self.problem;
        if f.grid() != p.grid() || f.fiber() != p.f.fiber() || f.domain() != Domain::Physical {
            return Err(Error::GridMismatch);
        }
        let mut flags = self.flags.clone();
        for fl in f.diagnose()? {
            push_flag(&mut flags, fl);
        }
        let u1 = self.inv.apply(f, false)?;
        let mut u = u1.clone();
        let mut increments = Vec::new();
        if let Some(a1) = p.active_a1() {
            let scale = besov_norm(&u1, &p.params, &self.sys)?.value;
            loop {
                if increments.len() >= self.settings.max_iterations {
                    return Err(Error::NoConvergence {
                        iterations: increments.len(),
                        increment: increments.last().copied().unwrap_or(f64::NAN),
                    });
                }
                let du = derivative(&u, 1, &mut flags)?;
                let rhs = f.sub(&pointwise(a1, &du, false))?;
                let next = self.inv.apply(&rhs, false)?;
                let inc = besov_norm(&next.sub(&u)?, &p.params, &self.sys)?.value;
                u = next;
                increments.push(inc);
                if inc <= self.settings.tolerance * scale {
                    break;
                }
            }
        }
        let lhs = full_operator(&p.a, p.active_a1(), self.lambda, &u)?;
        let res = lhs.sub(f)?;
        let f_l2 = f.l2_norm();
        let f_b = besov_norm(f, &p.params, &self.sys)?.value;
        let residual = relative(res.l2_norm(), f_l2);
        let residual_besov = relative(besov_norm(&res, &p.params, &self.sys)?.value, f_b);
        let coercivity = self.coercivity_terms(&u, f_b, &mut flags)?;
        Ok(SolveReport {
            u,
            lambda_requested: p.lambda,
            lambda: self.lambda,
            escalations: self.escalations,
            q_hat: self.q_hat,
            iterations: increments.len(),
            increments,
            residual,
            residual_besov,
            coercivity,
            coefficient_bound: coefficient_bound(p),
            flags,
        })
    }

    fn coercivity_terms(&self, u: &SampledFunction, f_b: f64, flags: &mut Vec<Flag>) -> Result<CoercivityTerms> {
        let p = &self.problem;
        let norm = |g: &SampledFunction| besov_norm(g, &p.params, &self.sys).map(|r| r.value);
        let u2 = norm(&derivative(u, 2, flags)?)?;
        let au = norm(&constant_apply(&p.a.row_major(), u))?;
        let (a1u, a1du) = match p.active_a1() {
            Some(a1) => {
                let du = derivative(u, 1, flags)?;
                (norm(&pointwise(a1, u, false))?, norm(&pointwise(a1, &du, false))?)
            }
            None => (0.0, 0.0),
        };
        let ratio = |x: f64| (f_b > 0.0).then(|| x / f_b);
        Ok(CoercivityTerms {
            second_derivative: u2,
            a1_u: a1u,
            a1_du: a1du,
            a_u: au,
            f: f_b,
            ratio: ratio(u2 + a1u + au),
            ratio_with_derivative: ratio(u2 + a1du + au),
        })
    }
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Largest singular value of `T = A_1 d/dt (L_0 + lambda)^{-1}` on discrete
/// `L_2`, by power iteration on `T^* T` from a seeded random start. The
/// Rayleigh estimate approaches the norm from below.
fn contraction_estimate(
    inv: &PrincipalInverse,
    a1: &SampledFunction,
    settings: &SolverSettings,
    flags: &mut Vec<Flag>,
) -> Result<f64> {
    let grid = *a1.grid();
    let fiber = Fiber::Vector(a1.fiber().dim());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut v = SampledFunction::from_fn(grid, Domain::Physical, fiber, |_, out| {
        for o in out.iter_mut() {
            *o = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    })?;
    let mut sigma: f64 = 0.0;
    let mut scratch = Vec::new();
    for _ in 0..settings.power_iterations.max(1) {
        let norm = v.l2_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = v.scaled(C64::new(1.0 / norm, 0.0));
        let tv = pointwise(a1, &derivative(&inv.apply(&v, false)?, 1, &mut scratch)?, false);
        let next = tv.l2_norm();
        // T^* = (L_0 + lambda)^{-*} (-d/dt) A_1^*.
        let back = derivative(&pointwise(a1, &tv, true), 1, &mut scratch)?;
        v = inv.apply(&back, true)?.scaled(C64::new(-1.0, 0.0));
        let done = (next - sigma).abs() <= settings.power_tolerance * next;
        sigma = sigma.max(next);
        if done {
            break;
        }
    }
    push_flag(flags, Flag::LowerBound);
    Ok(sigma)
}

/// `sup_t ||A_1(t) A^{-(1/2 - mu)}||`; `None` without a coefficient or when
/// the fractional power is unavailable.
fn coefficient_bound(p: &EllipticProblem) -> Option<f64> {
    let a1 = p.active_a1()?;
    let d = p.a.dim();
    let power = linalg::from_dmatrix(&fractional_power(&p.a, -(0.5 - p.mu)).ok()?);
    let mut prod = vec![ZERO; d * d];
    let sup = a1
        .nodes()
        .map(|m| {
            linalg::matmul(m, &power, d, &mut prod);
            linalg::op_norm(&prod, d)
        })
        .fold(0.0, f64::max);
    Some(sup)
}

/// The principal part only: `u = F^{-1}[(A + xi^2 + lambda)^{-1} f^]`.
/// Any first-order coefficient in `problem` is ignored.
pub fn solve_principal(problem: &EllipticProblem) -> Result<SolveReport> {
    Solver::principal(problem, &SolverSettings::default())?.solve(&problem.f)
}

/// The full equation by fixed-point iteration on the principal inverse,
/// escalating `lambda` when the contraction estimate is too close to one.
pub fn solve_full(problem: &EllipticProblem, settings: &SolverSettings) -> Result<SolveReport> {
    Solver::full(problem, settings)?.solve(&problem.f)
}
