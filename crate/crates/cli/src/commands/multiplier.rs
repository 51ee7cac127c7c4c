//! check-mikhlin, check-hormander, estimate-mpgamma, check-convolution and
//! check-fourier-type.

use besov_core::multiplier::{
    check_convolution_bounds, check_hormander, check_mikhlin, estimate_fourier_type_constant, estimate_m_p_gamma,
    lemma_bounds, refinement_study, verify_besov_multiplier_bound, ConditionReport, Refinement, Symbol, SymbolRef,
    SymbolSpec, DEFAULT_SCALE_RANGE,
};
use besov_core::partition::build_dyadic_system;
use besov_core::spaces::BesovParams;
use besov_core::{Domain, Fiber, Grid, SampledFunction, Weight, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{CliError, CliResult, Context, Exponent, FunctionSpec, KernelSpec};
use crate::report::{num, Check, Output, Table};

fn two() -> f64 {
    2.0
}

fn levels() -> usize {
    2
}

fn relative() -> f64 {
    1e-6
}

fn symbol_list(symbol: &Option<SymbolRef>, symbols: &[SymbolRef]) -> CliResult<Vec<SymbolSpec>> {
    let all: Vec<&SymbolRef> = symbol.iter().chain(symbols).collect();
    if all.is_empty() {
        return Err(CliError::Config("at `params`: give `symbol` or `symbols`".into()));
    }
    all.into_iter()
        .map(|s| {
            s.spec()
                .map_err(|e| CliError::Config(format!("at `params.symbol`: {e}")))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSpec {
    #[serde(default = "levels")]
    pub levels: usize,
    #[serde(default)]
    pub mode: Refinement,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionParams {
    #[serde(default)]
    pub symbol: Option<SymbolRef>,
    #[serde(default)]
    pub symbols: Vec<SymbolRef>,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub weight: Weight,
    /// Declared constant `A`; the check passes when `A^ <= A`.
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub refinement: Option<RefinementSpec>,
    /// Known value of `A^` on the base grid, compared to `tolerance` relative.
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default = "relative")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Condition {
    Mikhlin,
    Hormander,
}

fn level_summary(r: &ConditionReport) -> Value {
    json!({
        "points_per_axis": r.points_per_axis,
        "half_width": r.half_width,
        "a_hat": r.a_hat,
        "pass": r.pass,
    })
}

pub fn check_condition(ctx: &Context, p: &ConditionParams, which: Condition) -> CliResult<Output> {
    let mut out = Output::default();
    let check = |m: &Symbol, g: &Grid| match which {
        Condition::Mikhlin => check_mikhlin(m, p.p, &p.weight, p.bound, g),
        Condition::Hormander => check_hormander(m, p.p, &p.weight, p.bound, g),
    };
    let mut table = Table::new(
        "refinement.csv",
        &["symbol", "level", "points_per_axis", "half_width", "a_hat"],
    );
    let mut results = Vec::new();
    for spec in symbol_list(&p.symbol, &p.symbols)? {
        let label = spec.label();
        let (levels, study) = match &p.refinement {
            Some(r) => {
                let study = refinement_study(&spec, &ctx.grid, r.levels, r.mode, check)?;
                out.check(Check::new(
                    format!("{label}: condition under refinement"),
                    study.pass,
                    format!(
                        "A^ = {:e} on the base grid, growth {:e} < 2 over {} {:?} levels",
                        study.levels[0].a_hat, study.growth, r.levels, r.mode
                    ),
                ));
                let summary = json!({
                    "mode": study.mode,
                    "growth": study.growth,
                    "total_growth": study.total_growth,
                    "pass": study.pass,
                    "levels": study.levels.iter().map(level_summary).collect::<Vec<_>>(),
                });
                (study.levels, summary)
            }
            None => {
                let rep = check(&spec.build(&ctx.grid)?, &ctx.grid)?;
                let detail = match rep.bound {
                    Some(b) => format!("A^ = {:e} <= {b:e}", rep.a_hat),
                    None => format!("A^ = {:e} finite", rep.a_hat),
                };
                out.check(Check::new(format!("{label}: condition"), rep.pass, detail));
                (vec![rep], Value::Null)
            }
        };
        for (i, r) in levels.iter().enumerate() {
            table.push(vec![
                label.clone(),
                i.to_string(),
                r.points_per_axis.to_string(),
                num(r.half_width),
                num(r.a_hat),
            ]);
        }
        let base = &levels[0];
        if let Some(e) = p.expected {
            let err = (base.a_hat - e).abs() / e.abs().max(f64::MIN_POSITIVE);
            out.check(Check::new(
                format!("{label}: expected constant"),
                err <= p.tolerance,
                format!(
                    "A^ = {:e} vs {e:e}, relative error {err:e} <= {:e}",
                    base.a_hat, p.tolerance
                ),
            ));
        }
        results.push(json!({
            "symbol": label,
            "a_hat": base.a_hat,
            "report": base,
            "refinement": study,
        }));
    }
    out.table(table);
    out.result = json!({ "symbols": results });
    Ok(out)
}

fn j_max() -> i32 {
    DEFAULT_SCALE_RANGE
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpGammaParams {
    #[serde(default)]
    pub symbol: Option<SymbolRef>,
    #[serde(default)]
    pub symbols: Vec<SymbolRef>,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub weight: Weight,
    /// Scales `a = 2^j`, `|j| <= j_max`.
    #[serde(default = "j_max")]
    pub j_max: i32,
    /// Per-block constants and the empirical operator norm on this Besov
    /// space, measured on the configured ensemble.
    #[serde(default)]
    pub besov: Option<BesovParams>,
    /// Upper bound on the empirical `||T_m f||_B / ||f||_B`.
    #[serde(default)]
    pub ratio_bound: Option<f64>,
    /// Derivative bounds on the dyadic pieces for `u = p` and `u = inf`.
    #[serde(default)]
    pub lemma: bool,
}

pub fn estimate_mpgamma(ctx: &Context, p: &MpGammaParams) -> CliResult<Output> {
    let mut out = Output::default();
    let sys = build_dyadic_system(&ctx.grid)?;
    let mut scales = Table::new(
        "scales.csv",
        &["symbol", "a", "norm", "boundary_ratio", "top_octave", "included"],
    );
    let mut blocks = Table::new("per_block.csv", &["symbol", "k", "m_hat", "best_scale"]);
    let mut results = Vec::new();
    for spec in symbol_list(&p.symbol, &p.symbols)? {
        let label = spec.label();
        let m = spec.build(&ctx.grid)?;
        let rep = estimate_m_p_gamma(&m, p.p, &p.weight, &ctx.grid, p.j_max)?;
        out.check(Check::finite(format!("{label}: M^ finite"), rep.m_hat));
        for s in &rep.scales {
            scales.push(vec![
                label.clone(),
                num(s.a),
                num(s.norm),
                num(s.boundary_ratio),
                num(s.top_octave),
                s.included.to_string(),
            ]);
        }
        let bound = match &p.besov {
            Some(params) => {
                let members = ctx.members(m.fiber_dim())?;
                let b = verify_besov_multiplier_bound(&m, params, p.p, &p.weight, &members, &sys, p.j_max)?;
                for c in &b.per_block {
                    blocks.push(vec![label.clone(), c.k.to_string(), num(c.m_hat), num(c.best_scale)]);
                }
                out.check(Check::new(
                    format!("{label}: per-block constants finite"),
                    b.a_hat.is_finite() && b.empirical.is_finite(),
                    format!("max_k M^(phi_k m) = {:e}, empirical norm {:e}", b.a_hat, b.empirical),
                ));
                if let Some(r) = p.ratio_bound {
                    out.check(Check::at_most(format!("{label}: empirical ratio"), b.empirical, r));
                }
                serde_json::to_value(&b).map_err(std::io::Error::from)?
            }
            None => Value::Null,
        };
        let lemma = if p.lemma && m.is_closed_form() {
            let dim = ctx.grid.dim();
            let at_p = lemma_bounds(&m, dim, p.p, &p.weight, p.p, sys.k_max(), None)?;
            let at_inf = lemma_bounds(&m, dim, p.p, &p.weight, f64::INFINITY, sys.k_max(), None)?;
            json!({ "u_p": at_p, "u_inf": at_inf })
        } else {
            Value::Null
        };
        results.push(json!({
            "symbol": label,
            "scale": rep,
            "besov_bound": bound,
            "lemma_bounds": lemma,
        }));
    }
    out.table(scales);
    out.table(blocks);
    out.result = json!({ "symbols": results });
    Ok(out)
}

fn default_qs() -> Vec<Exponent> {
    vec![Exponent(1.0), Exponent(2.0), Exponent(f64::INFINITY)]
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionParams {
    pub kernels: Vec<KernelSpec>,
    /// `gamma~`.
    #[serde(default)]
    pub weight: Weight,
    #[serde(default = "default_qs")]
    pub q: Vec<Exponent>,
}

/// Expand the kernel specs into labelled samples, drawing random kernels
/// from one stream seeded by the run seed.
fn kernels(ctx: &Context, specs: &[KernelSpec]) -> CliResult<Vec<(String, SampledFunction)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let grid = ctx.grid;
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        match spec {
            KernelSpec::Gaussian {
                center,
                width,
                amplitude,
                matrix,
            } => {
                let (b, d) = match matrix {
                    Some(m) => {
                        let mat = m.to_matrix()?;
                        (besov_core::linalg::from_dmatrix(&mat), mat.nrows())
                    }
                    None => (vec![C64::new(1.0, 0.0)], 1),
                };
                let (c, w, a) = (*center, *width, *amplitude);
                if !(w.is_finite() && w > 0.0) {
                    return Err(CliError::Config(format!(
                        "at `params.kernels[{i}].width`: {w} must be positive"
                    )));
                }
                let k = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Matrix(d), |x, out| {
                    let r2: f64 = x.iter().map(|t| (t - c) * (t - c)).sum();
                    let s = a * (-r2 / (w * w)).exp();
                    for (o, v) in out.iter_mut().zip(&b) {
                        *o = v * s;
                    }
                })?;
                out.push((format!("kernel {i}: gaussian"), k));
            }
            KernelSpec::Zero { d } => {
                out.push((
                    format!("kernel {i}: zero"),
                    SampledFunction::zeros(grid, Domain::Physical, Fiber::Matrix(*d)),
                ));
            }
            KernelSpec::Random {
                count,
                d,
                center_range,
                sigma_min,
                sigma_max,
            } => {
                if !(sigma_min > &0.0 && sigma_max >= sigma_min && *center_range >= 0.0) {
                    return Err(CliError::Config(format!(
                        "at `params.kernels[{i}]`: invalid random kernel ranges"
                    )));
                }
                for j in 0..*count {
                    let c: f64 = rng.gen_range(-center_range..=*center_range);
                    let sigma: f64 = rng.gen_range(*sigma_min..=*sigma_max);
                    let b: Vec<C64> = (0..d * d)
                        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    let k = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Matrix(*d), |x, out| {
                        let r2: f64 = x.iter().map(|t| (t - c) * (t - c)).sum();
                        let s = (-r2 / (2.0 * sigma * sigma)).exp();
                        for (o, v) in out.iter_mut().zip(&b) {
                            *o = v * s;
                        }
                    })?;
                    out.push((format!("kernel {i}.{j}: random"), k));
                }
            }
        }
    }
    Ok(out)
}

pub fn check_convolution(ctx: &Context, p: &ConvolutionParams) -> CliResult<Output> {
    if p.kernels.is_empty() {
        return Err(CliError::Config(
            "at `params.kernels`: at least one kernel is required".into(),
        ));
    }
    let mut out = Output::default();
    let qs: Vec<f64> = p.q.iter().map(|q| q.0).collect();
    let mut table = Table::new(
        "convolution.csv",
        &[
            "kernel",
            "q",
            "c1",
            "c2",
            "c3",
            "bound",
            "bound_swapped",
            "empirical",
            "symbol_sup",
        ],
    );
    let mut members_by_dim: Vec<(usize, Vec<SampledFunction>)> = Vec::new();
    let mut results = Vec::new();
    for (label, kernel) in kernels(ctx, &p.kernels)? {
        let d = kernel.fiber().dim();
        if !members_by_dim.iter().any(|(k, _)| *k == d) {
            members_by_dim.push((d, ctx.members(d)?));
        }
        let members = &members_by_dim.iter().find(|(k, _)| *k == d).expect("sampled above").1;
        let reports = check_convolution_bounds(&kernel, &p.weight, &qs, members)?;
        for r in &reports {
            table.push(vec![
                label.clone(),
                num(r.q),
                num(r.c1),
                num(r.c2),
                num(r.c3),
                num(r.bound),
                num(r.bound_swapped),
                num(r.empirical),
                num(r.symbol_sup),
            ]);
            out.check(Check::new(
                format!("{label}, q = {}: empirical <= C1 C2^(1/q) C3^(1-1/q)", r.q),
                r.pass,
                format!("{:e} <= {:e}", r.empirical, r.bound),
            ));
        }
        results.push(json!({ "kernel": label, "reports": reports }));
    }
    out.table(table);
    out.result = json!({ "kernels": results });
    Ok(out)
}

fn ensemble_function() -> FunctionSpec {
    FunctionSpec::Ensemble
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTypeParams {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub weight: Weight,
    #[serde(default = "ensemble_function")]
    pub function: FunctionSpec,
    /// Required `F^ <= upper`.
    #[serde(default)]
    pub upper: Option<f64>,
    /// Required `F^ >= lower`.
    #[serde(default)]
    pub lower: Option<f64>,
}

pub fn check_fourier_type(ctx: &Context, p: &FourierTypeParams) -> CliResult<Output> {
    let mut out = Output::default();
    let d = p.function.fiber_dim().unwrap_or(1);
    let members = p.function.sample(ctx, d)?;
    let rep = estimate_fourier_type_constant(p.p, &p.weight, &members)?;
    out.check(Check::finite("F^ finite", rep.f_hat));
    if let Some(u) = p.upper {
        out.check(Check::at_most("F^ upper bound", rep.f_hat, u));
    }
    if let Some(l) = p.lower {
        out.check(Check::new(
            "F^ lower bound",
            rep.f_hat >= l,
            format!("{:e} >= {l:e}", rep.f_hat),
        ));
    }
    let mut table = Table::new("fourier_type.csv", &["member", "ratio"]);
    for (i, r) in rep.ratios.iter().enumerate() {
        table.push(vec![i.to_string(), num(*r)]);
    }
    out.table(table);
    out.result = serde_json::to_value(&rep).map_err(std::io::Error::from)?;
    Ok(out)
}
