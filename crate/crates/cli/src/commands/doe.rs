//! solve-dop, solve-full, solve-degenerate, verify-coercivity and
//! verify-interpolation.

use besov_core::doe::{
    coercivity_study, contraction_sweep, degenerate_transform, interpolation_study, lower_order_shape, sigma_bound,
    solve_degenerate, solve_full, solve_principal, verify_interpolation_embedding, CoefficientSpec, HGrid,
    InterpolationSetup, ProblemSpec, SolverSettings,
};
use besov_core::opcalc::{verify_phi_positive, SamplePlan};
use besov_core::{Error, SampledFunction, C64};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{parse_seeded, CliError, CliResult, Context};
use crate::report::{num, opt, Check, Output, Table};

fn to_json<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(std::io::Error::from)?)
}

fn solution_csv(out: &mut Output, u: &SampledFunction) -> CliResult<()> {
    let mut bytes = Vec::new();
    u.write_csv(&mut bytes)?;
    out.raw("solution.csv", bytes);
    Ok(())
}

/// `||u - exact||_{L_2} / ||exact||_{L_2}`.
fn relative_error(u: &SampledFunction, exact: &SampledFunction) -> CliResult<f64> {
    Ok(u.sub(exact)?.l2_norm() / exact.l2_norm())
}

fn exact_check(out: &mut Output, spec: &ProblemSpec, ctx: &Context, u: &SampledFunction, tol: f64) -> CliResult<Value> {
    match spec.exact_solution(&ctx.grid)? {
        Some(exact) => {
            let err = relative_error(u, &exact)?;
            out.check(Check::at_most("manufactured solution recovered", err, tol));
            Ok(Value::from(err))
        }
        None => Ok(Value::Null),
    }
}

/// Resolve `params.settings`, injecting the run seed.
fn settings(ctx: &Context, raw: &Option<Value>) -> CliResult<SolverSettings> {
    parse_seeded("params.settings", raw.as_ref(), ctx.seed, &[])
}

fn principal_tolerance() -> f64 {
    1e-10
}

fn exact_tolerance() -> f64 {
    1e-8
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDopParams {
    pub problem: ProblemSpec,
    /// Resolvent sample plan for the sector check of `A`.
    #[serde(default)]
    pub plan: Option<SamplePlan>,
    #[serde(default = "principal_tolerance")]
    pub residual_tolerance: f64,
    #[serde(default = "exact_tolerance")]
    pub exact_tolerance: f64,
}

pub fn solve_dop(ctx: &Context, p: &SolveDopParams) -> CliResult<Output> {
    if p.problem.a1 != CoefficientSpec::Zero {
        return Err(CliError::Config(
            "at `params.problem.a1`: solve-dop solves the principal part; use solve-full for A1".into(),
        ));
    }
    let mut out = Output::default();
    let problem = p.problem.build(&ctx.grid)?;
    let sector = verify_phi_positive(&problem.a, &p.plan.unwrap_or_default());
    out.check(Check::new(
        "A is phi-positive",
        sector.pass,
        format!("M^ = {:e}, relative change {:e}", sector.m_hat, sector.relative_change),
    ));
    let rep = solve_principal(&problem)?;
    out.check(Check::at_most("residual", rep.residual, p.residual_tolerance));
    let exact = exact_check(&mut out, &p.problem, ctx, &rep.u, p.exact_tolerance)?;
    solution_csv(&mut out, &rep.u)?;
    out.result = json!({
        "solve": rep,
        "exact_error": exact,
        "sector": { "m_hat": sector.m_hat, "m_hat_dense": sector.m_hat_dense, "pass": sector.pass },
    });
    Ok(out)
}

fn full_tolerance() -> f64 {
    1e-7
}

fn full_exact_tolerance() -> f64 {
    1e-5
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerOrderSpec {
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub h: HGrid,
    /// Defaults to the problem's `mu`.
    #[serde(default)]
    pub mu: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFullParams {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub settings: Option<Value>,
    #[serde(default = "full_tolerance")]
    pub residual_tolerance: f64,
    #[serde(default = "full_exact_tolerance")]
    pub exact_tolerance: f64,
    /// `lambda` ladder for the contraction sweep; written to
    /// `contraction.csv` (header only when empty).
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub lower_order: Option<LowerOrderSpec>,
}

fn ladder(name: &str, lambdas: &[f64]) -> CliResult<Vec<f64>> {
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(CliError::Config(format!(
            "at `params.{name}`: lambda {l} must be positive"
        )));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

pub fn solve_full_cmd(ctx: &Context, p: &SolveFullParams) -> CliResult<(Output, SolverSettings)> {
    let settings = settings(ctx, &p.settings)?;
    let mut out = Output::default();
    let problem = p.problem.build(&ctx.grid)?;
    let mut result = serde_json::Map::new();
    match solve_full(&problem, &settings) {
        Ok(rep) => {
            out.check(Check::new(
                "contraction",
                true,
                format!("q^ = {} at lambda = {}", opt(rep.q_hat), rep.lambda),
            ));
            out.check(Check::at_most("residual", rep.residual, p.residual_tolerance));
            let exact = exact_check(&mut out, &p.problem, ctx, &rep.u, p.exact_tolerance)?;
            solution_csv(&mut out, &rep.u)?;
            result.insert("solve".into(), to_json(&rep)?);
            result.insert("exact_error".into(), exact);
        }
        Err(e @ (Error::NotContractive { .. } | Error::NoConvergence { .. })) => {
            out.check(Check::new("contraction", false, e.to_string()));
            result.insert("solve".into(), json!({ "error": e.to_string() }));
        }
        Err(e) => return Err(e.into()),
    }
    if let Some(lambdas) = &p.sweep {
        let lambdas = ladder("sweep", lambdas)?;
        let mut table = Table::new("contraction.csv", &["lambda", "q_hat", "iterations", "residual"]);
        if !lambdas.is_empty() {
            let sweep = contraction_sweep(&p.problem, &ctx.grid, &lambdas, &settings)?;
            for i in 0..sweep.lambdas.len() {
                table.push(vec![
                    num(sweep.lambdas[i]),
                    num(sweep.q_hat[i]),
                    sweep.iterations[i].map(|n| n.to_string()).unwrap_or_default(),
                    opt(sweep.residuals[i]),
                ]);
            }
            out.check(Check::new(
                "q^ nonincreasing in lambda",
                sweep.monotone,
                format!("q^ = {:?}", sweep.q_hat),
            ));
            result.insert("sweep".into(), to_json(&sweep)?);
        }
        out.table(table);
    }
    if let Some(spec) = &p.lower_order {
        let lambdas = ladder("lower_order.lambdas", &spec.lambdas)?;
        let mu = spec.mu.unwrap_or(p.problem.mu);
        let ensemble = ctx.ensemble(Some(p.problem.fiber_dim()))?;
        let rep = lower_order_shape(&p.problem, &ensemble, &ctx.grid, &lambdas, &spec.h, mu)?;
        let mut table = Table::new("lower_order.csv", &["lambda", "rho", "margin"]);
        for i in 0..rep.lambdas.len() {
            table.push(vec![num(rep.lambdas[i]), num(rep.rho[i]), num(rep.margins[i])]);
        }
        out.check(Check::new(
            "perturbation bound shape",
            rep.holds,
            format!("c = {:e}, margins {:?}", rep.c, rep.margins),
        ));
        out.table(table);
        result.insert("lower_order".into(), to_json(&rep)?);
    }
    out.result = Value::Object(result);
    Ok((out, settings))
}

fn degenerate_tolerance() -> f64 {
    1e-5
}

fn round_trip_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDegenerateParams {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub settings: Option<Value>,
    #[serde(default = "degenerate_tolerance")]
    pub residual_tolerance: f64,
    #[serde(default = "degenerate_tolerance")]
    pub exact_tolerance: f64,
    /// Bound on `|t(tau(t)) - t|` over the physical nodes.
    #[serde(default = "round_trip_tolerance")]
    pub round_trip_tolerance: f64,
}

pub fn solve_degenerate_cmd(ctx: &Context, p: &SolveDegenerateParams) -> CliResult<(Output, SolverSettings)> {
    let settings = settings(ctx, &p.settings)?;
    let mut out = Output::default();
    let map = degenerate_transform(&p.problem.gamma, &ctx.grid, settings.gamma_min)?;
    let mut table = Table::new("tau_map.csv", &["i", "t", "tau", "round_trip_error"]);
    let mut worst: f64 = 0.0;
    for (j, &tau) in map.node_tau().iter().enumerate() {
        let t = ctx.grid.x_axis(j);
        let err = map.inverse(tau).map_or(f64::INFINITY, |back| (back - t).abs());
        worst = worst.max(err);
        table.push(vec![j.to_string(), num(t), num(tau), num(err)]);
    }
    out.table(table);
    out.check(Check::at_most(
        "t -> tau -> t round trip",
        worst,
        p.round_trip_tolerance,
    ));
    let problem = p.problem.build(&ctx.grid)?;
    let mut result = serde_json::Map::new();
    result.insert("round_trip_error".into(), Value::from(worst));
    match solve_degenerate(&problem, &settings) {
        Ok(rep) => {
            out.check(Check::at_most("residual", rep.residual, p.residual_tolerance));
            let exact = exact_check(&mut out, &p.problem, ctx, &rep.u, p.exact_tolerance)?;
            solution_csv(&mut out, &rep.u)?;
            result.insert("solve".into(), to_json(&rep)?);
            result.insert("exact_error".into(), exact);
        }
        Err(e @ (Error::NotContractive { .. } | Error::NoConvergence { .. })) => {
            out.check(Check::new("contraction", false, e.to_string()));
            result.insert("solve".into(), json!({ "error": e.to_string() }));
        }
        Err(e) => return Err(e.into()),
    }
    out.result = Value::Object(result);
    Ok((out, settings))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoercivityParams {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub settings: Option<Value>,
    /// `lambda` ladder; sorted ascending in the output.
    pub lambdas: Vec<f64>,
    /// Resolvent sample plan for the `sup ||xi^2 (A + xi^2 + lambda)^{-1}||`
    /// check.
    #[serde(default)]
    pub plan: Option<SamplePlan>,
}

pub fn verify_coercivity_cmd(ctx: &Context, p: &CoercivityParams) -> CliResult<(Output, SolverSettings)> {
    let settings = settings(ctx, &p.settings)?;
    let mut out = Output::default();
    let lambdas = ladder("lambdas", &p.lambdas)?;
    let mut table = Table::new(
        "coercivity.csv",
        &[
            "lambda",
            "c_hat",
            "c_hat_derivative",
            "c_hat_refined",
            "sigma_sup",
            "sigma_m_hat",
        ],
    );
    if lambdas.is_empty() {
        out.table(table);
        out.result = json!({ "lambdas": [] });
        return Ok((out, settings));
    }
    let ensemble = ctx.ensemble(Some(p.problem.fiber_dim()))?;
    let study = coercivity_study(&p.problem, &ensemble, &ctx.grid, &lambdas, &settings)?;
    out.check(Check::new(
        "coercivity constant uniform and refinement-stable",
        study.pass,
        format!(
            "spread max/min {:e} < 2, drift under M -> 2M {:e} < 0.02",
            study.spread, study.drift
        ),
    ));
    let op = p.problem.build(&ctx.grid)?.a;
    let plan = p.plan.unwrap_or_default();
    let mut sigmas = Vec::new();
    for (i, &l) in lambdas.iter().enumerate() {
        let s = sigma_bound(&op, C64::new(l, p.problem.lambda_im), &ctx.grid, &plan)?;
        out.check(Check::new(
            format!("sigma bound at lambda = {l}"),
            s.pass,
            format!("sup {:e} <= M^ + 1 = {:e}", s.sup, s.m_hat + 1.0),
        ));
        table.push(vec![
            num(l),
            num(study.base[i].c_hat),
            num(study.base[i].c_hat_derivative),
            num(study.refined[i].c_hat),
            num(s.sup),
            num(s.m_hat),
        ]);
        sigmas.push(s);
    }
    out.table(table);
    out.result = json!({ "study": study, "sigma_bounds": sigmas });
    Ok((out, settings))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolationParams {
    pub setup: InterpolationSetup,
    /// Repeat on a doubled `h` grid and a refined spatial grid and require
    /// stability and the balance-point slope; otherwise evaluate once.
    #[serde(default = "yes")]
    pub study: bool,
    /// Required `C_mu <= c_mu_bound` on the base evaluation.
    #[serde(default)]
    pub c_mu_bound: Option<f64>,
}

fn yes() -> bool {
    true
}

pub fn verify_interpolation(ctx: &Context, p: &InterpolationParams) -> CliResult<Output> {
    let mut out = Output::default();
    let d = p.setup.a.0.len();
    let ensemble = ctx.ensemble(Some(d))?;
    let (base, result) = if p.study {
        let study = interpolation_study(&ensemble, &ctx.grid, &p.setup)?;
        out.check(Check::new(
            "interpolation constant stable",
            study.pass,
            format!(
                "C_mu = {:e}; drift over h refinement {:e}, grid doubling {:e} (< 2); balance slope {} (-1 +- 0.15)",
                study.base.c_mu,
                study.drift_h,
                study.drift_grid,
                opt(study.base.slope)
            ),
        ));
        let result = to_json(&study)?;
        (study.base, result)
    } else {
        let rep = verify_interpolation_embedding(&ensemble.sample(&ctx.grid)?, &p.setup)?;
        out.check(Check::finite("C_mu finite", rep.c_mu));
        let result = to_json(&rep)?;
        (rep, result)
    };
    if let Some(b) = p.c_mu_bound {
        out.check(Check::at_most("C_mu bound", base.c_mu, b));
    }
    let mut table = Table::new(
        "balance.csv",
        &[
            "member",
            "lhs",
            "lions",
            "base",
            "h_star",
            "bracket_min",
            "ratio",
            "interior",
        ],
    );
    for (i, m) in base.members.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            num(m.lhs),
            num(m.lions),
            num(m.base),
            num(m.h_star),
            num(m.bracket_min),
            num(m.ratio),
            m.interior.to_string(),
        ]);
    }
    out.table(table);
    out.result = result;
    Ok(out)
}
