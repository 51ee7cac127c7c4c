//! besov-norm, check-weight, verify-embedding and check-operator.

use std::f64::consts::FRAC_PI_2;

use besov_core::opcalc::{
    fractional_power, resolvent, spectral_norm, verify_phi_positive, MatrixSpec, PositiveOperator, SamplePlan,
};
use besov_core::partition::{build_dyadic_system, verify_partition, write_psi_csv};
use besov_core::spaces::{besov_lions_norm, besov_norm, verify_embedding_on, BesovParams, EmbeddingKind};
use besov_core::weights::{check_integrability, check_weight_submultiplicative, Differences, IntegrandForm};
use besov_core::{Weight, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{CliError, CliResult, Context, FunctionSpec};
use crate::report::{num, opt, Check, Output, Table};

fn half_pi() -> f64 {
    FRAC_PI_2
}

fn psi_samples() -> usize {
    301
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LionsSpec {
    pub a: MatrixSpec,
    #[serde(default = "half_pi")]
    pub phi: f64,
    pub l: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovNormParams {
    #[serde(default)]
    pub besov: BesovParams,
    #[serde(default)]
    pub function: FunctionSpec,
    /// Also compute the Besov-Lions norm `||u||_{B(E(A))} + ||D^l u||_B`.
    #[serde(default)]
    pub lions: Option<LionsSpec>,
    /// Points of the tabulated `psi` written to `psi.csv`.
    #[serde(default = "psi_samples")]
    pub psi_samples: usize,
}

pub fn besov_norm_cmd(ctx: &Context, p: &BesovNormParams) -> CliResult<Output> {
    let mut out = Output::default();
    let sys = build_dyadic_system(&ctx.grid)?;
    let partition = verify_partition(&sys);
    out.check(Check::new(
        "partition of unity",
        partition.pass(),
        format!(
            "sum residual {:e}, telescoping residual {:e}, support violation {:e}",
            partition.sum_residual, partition.telescoping_residual, partition.support_violation
        ),
    ));
    let op = match &p.lions {
        Some(l) => Some(PositiveOperator::new(l.a.to_matrix()?, l.phi)?),
        None => None,
    };
    let d = op
        .as_ref()
        .map(PositiveOperator::dim)
        .or(p.function.fiber_dim())
        .unwrap_or(1);
    let members = p.function.sample(ctx, d)?;
    let mut spectrum = Table::new("block_spectrum.csv", &["member", "k", "contrib"]);
    let mut reports = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, f) in members.iter().enumerate() {
        let norm = besov_norm(f, &p.besov, &sys)?;
        for b in &norm.blocks {
            spectrum.push(vec![i.to_string(), b.k.to_string(), num(b.contrib)]);
        }
        worst = if norm.value.is_finite() {
            worst.max(norm.value)
        } else {
            f64::INFINITY
        };
        let lions = match (&op, &p.lions) {
            (Some(op), Some(spec)) => Some(besov_lions_norm(f, spec.l, op, &p.besov, &sys)?),
            _ => None,
        };
        if let Some(l) = &lions {
            out.check(Check::finite(format!("member {i}: Besov-Lions norm finite"), l.value));
        }
        reports.push(json!({ "member": i, "norm": norm, "lions": lions }));
    }
    out.check(Check::finite("Besov norms finite", worst));
    let mut psi = Vec::new();
    write_psi_csv(&mut psi, p.psi_samples)?;
    out.table(spectrum);
    out.raw("psi.csv", psi);
    out.result = json!({
        "k_max": sys.k_max(),
        "partition": partition,
        "members": reports,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceMode {
    #[default]
    Euclidean,
    Periodic,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmultiplicativeSpec {
    pub weight: Weight,
    /// Overrides the registry constant.
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub differences: DifferenceMode,
    /// Repeat the check on this many successively extended boxes.
    #[serde(default)]
    pub extend_levels: usize,
}

fn tight() -> f64 {
    1e-8
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrabilitySpec {
    /// `gamma`.
    #[serde(default)]
    pub weight: Weight,
    /// `gamma~`.
    #[serde(default)]
    pub weight_tilde: Weight,
    pub integrand: IntegrandForm,
    /// One `[a, b]` per axis.
    #[serde(rename = "box")]
    pub omega: Vec<[f64; 2]>,
    #[serde(default)]
    pub expect_finite: Option<bool>,
    #[serde(default)]
    pub expected_value: Option<f64>,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckWeightParams {
    #[serde(default)]
    pub submultiplicative: Option<SubmultiplicativeSpec>,
    #[serde(default)]
    pub integrability: Option<IntegrabilitySpec>,
}

pub fn check_weight(ctx: &Context, p: &CheckWeightParams) -> CliResult<Output> {
    if p.submultiplicative.is_none() && p.integrability.is_none() {
        return Err(CliError::Config(
            "at `params`: give `submultiplicative`, `integrability` or both".into(),
        ));
    }
    let mut out = Output::default();
    let mut result = serde_json::Map::new();
    if let Some(s) = &p.submultiplicative {
        s.weight.validate(ctx.grid.dim())?;
        let differences = match s.differences {
            DifferenceMode::Euclidean => Differences::Euclidean,
            DifferenceMode::Periodic => Differences::Periodic,
        };
        let mut table = Table::new("submultiplicative.csv", &["half_width", "c_hat", "declared"]);
        let mut levels = Vec::new();
        let mut grid = ctx.grid;
        for level in 0..=s.extend_levels {
            if level > 0 {
                grid = grid.extended();
            }
            let rep = check_weight_submultiplicative(&s.weight, &grid, s.bound, differences);
            table.push(vec![num(grid.half_width()), num(rep.c_hat), opt(rep.declared)]);
            let detail = match rep.declared {
                Some(c) => format!(
                    "C^ = {:e} against declared {c:e} on L = {}",
                    rep.c_hat,
                    grid.half_width()
                ),
                None => format!(
                    "C^ = {:e} on L = {}; weight has no declared constant",
                    rep.c_hat,
                    grid.half_width()
                ),
            };
            out.check(Check::new(
                format!("sub-multiplicativity (L = {})", grid.half_width()),
                rep.pass,
                detail,
            ));
            levels.push(json!({ "half_width": grid.half_width(), "report": rep }));
        }
        out.table(table);
        result.insert("submultiplicative".into(), Value::Array(levels));
    }
    if let Some(spec) = &p.integrability {
        let omega: Vec<(f64, f64)> = spec.omega.iter().map(|[a, b]| (*a, *b)).collect();
        let rep = check_integrability(&spec.weight, &spec.weight_tilde, spec.integrand, &omega)?;
        if let Some(expect) = spec.expect_finite {
            out.check(Check::new(
                "integrability verdict",
                rep.finite == expect,
                format!("finite = {} (expected {expect})", rep.finite),
            ));
        }
        if let Some(v) = spec.expected_value {
            let err = (rep.value - v).abs();
            out.check(Check::new(
                "integral value",
                rep.finite && err <= spec.tolerance,
                format!("{:e} vs {v:e}, error {err:e} <= {:e}", rep.value, spec.tolerance),
            ));
        }
        let mut table = Table::new("integrability.csv", &["depth", "partial_sum"]);
        for (i, s) in rep.partial_sums.iter().enumerate() {
            table.push(vec![i.to_string(), num(*s)]);
        }
        out.table(table);
        result.insert(
            "integrability".into(),
            serde_json::to_value(&rep).map_err(std::io::Error::from)?,
        );
    }
    out.result = Value::Object(result);
    Ok(out)
}

fn embedding_function() -> FunctionSpec {
    FunctionSpec::Ensemble
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingParams {
    pub embedding: EmbeddingKind,
    #[serde(default = "embedding_function")]
    pub function: FunctionSpec,
    /// Repeat on the refined grid and require each link's maximum ratio to
    /// move by less than a factor 2.
    #[serde(default)]
    pub refine: bool,
}

/// Relative slack on analytic embedding bounds.
const EMBEDDING_SLACK: f64 = 1e-9;

pub fn verify_embedding_cmd(ctx: &Context, p: &EmbeddingParams) -> CliResult<Output> {
    let mut out = Output::default();
    let d = p.function.fiber_dim().unwrap_or(1);
    let sys = build_dyadic_system(&ctx.grid)?;
    let members = p.function.sample(ctx, d)?;
    let rep = verify_embedding_on(&p.embedding, &members, &sys)?;
    let mut table = Table::new("embedding.csv", &["link", "member", "ratio"]);
    for link in &rep.links {
        for (i, r) in link.ratios.iter().enumerate() {
            table.push(vec![link.label.clone(), i.to_string(), num(*r)]);
        }
        if link.ratios.is_empty() {
            continue;
        }
        out.check(Check::new(
            format!("{}: ratios finite and positive", link.label),
            link.max_ratio.is_finite() && link.min_ratio > 0.0,
            format!("ratios in [{:e}, {:e}]", link.min_ratio, link.max_ratio),
        ));
        if let Some(b) = link.bound {
            out.check(Check::at_most(
                format!("{}: analytic bound", link.label),
                link.max_ratio,
                b * (1.0 + EMBEDDING_SLACK),
            ));
        }
    }
    let mut refined = Value::Null;
    if p.refine {
        let g = ctx.grid.refined();
        let sys2 = build_dyadic_system(&g)?;
        let fine_ctx = ctx.with_grid(g);
        let rep2 = verify_embedding_on(&p.embedding, &p.function.sample(&fine_ctx, d)?, &sys2)?;
        for (a, b) in rep.links.iter().zip(&rep2.links) {
            if a.ratios.is_empty() || b.ratios.is_empty() {
                continue;
            }
            let change = a.max_ratio.max(b.max_ratio) / a.max_ratio.min(b.max_ratio);
            out.check(Check::new(
                format!("{}: refinement stability", a.label),
                change < 2.0,
                format!(
                    "max ratio {:e} -> {:e}, factor {change:e} < 2",
                    a.max_ratio, b.max_ratio
                ),
            ));
        }
        refined = serde_json::to_value(&rep2).map_err(std::io::Error::from)?;
    }
    out.table(table);
    out.result = json!({ "report": rep, "refined": refined });
    Ok(out)
}

fn resolvent_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorParams {
    pub a: MatrixSpec,
    #[serde(default = "half_pi")]
    pub phi: f64,
    #[serde(default)]
    pub declared_m: Option<f64>,
    #[serde(default)]
    pub plan: Option<SamplePlan>,
    /// Exponents `theta` for `A^theta`.
    #[serde(default)]
    pub powers: Vec<f64>,
    /// Points `lambda = [re, im]` for `(A + lambda)^{-1}`.
    #[serde(default)]
    pub resolvents: Vec<[f64; 2]>,
    #[serde(default = "resolvent_tolerance")]
    pub resolvent_tolerance: f64,
}

pub fn check_operator(_ctx: &Context, p: &OperatorParams) -> CliResult<Output> {
    let mut out = Output::default();
    let matrix = p.a.to_matrix()?;
    let mut op = PositiveOperator::new(matrix.clone(), p.phi)?;
    if let Some(m) = p.declared_m {
        op = op.with_declared_m(m);
    }
    let plan = p.plan.unwrap_or_default();
    let sector = verify_phi_positive(&op, &plan);
    out.check(Check::new(
        "phi-positive",
        sector.pass,
        format!(
            "M^ = {:e} (dense plan {:e}, change {:e}); offending eigenvalue {:?}",
            sector.m_hat, sector.m_hat_dense, sector.relative_change, sector.offending_eigenvalue
        ),
    ));
    let mut samples = Table::new("sector_samples.csv", &["modulus", "arg", "value"]);
    for s in &sector.samples {
        samples.push(s.iter().map(|v| num(*v)).collect());
    }
    out.table(samples);
    let d = op.dim();
    let mut powers = Vec::new();
    for &theta in &p.powers {
        match fractional_power(&op, theta) {
            Ok(m) => powers.push(json!({ "theta": theta, "matrix": MatrixSpec::from_matrix(&m) })),
            Err(e) => {
                out.check(Check::new(format!("A^{theta} defined"), false, e.to_string()));
                powers.push(json!({ "theta": theta, "error": e.to_string() }));
            }
        }
    }
    let mut resolvents = Vec::new();
    for &[re, im] in &p.resolvents {
        let lambda = C64::new(re, im);
        match resolvent(&matrix, lambda) {
            Ok(r) => {
                let shifted = &matrix + DMatrix::<C64>::identity(d, d) * lambda;
                let residual = spectral_norm(&(&r * shifted - DMatrix::<C64>::identity(d, d)));
                out.check(Check::at_most(
                    format!("resolvent identity at lambda = {re}{im:+}i"),
                    residual,
                    p.resolvent_tolerance,
                ));
                resolvents.push(json!({
                    "lambda": [re, im],
                    "matrix": MatrixSpec::from_matrix(&r),
                    "residual": residual,
                }));
            }
            Err(e) => {
                out.check(Check::new(
                    format!("resolvent at lambda = {re}{im:+}i"),
                    false,
                    e.to_string(),
                ));
                resolvents.push(json!({ "lambda": [re, im], "error": e.to_string() }));
            }
        }
    }
    let eigenvalues: Vec<[f64; 2]> = op.eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    out.result = json!({
        "eigenvalues": eigenvalues,
        "eigenvector_condition": op.eigenvector_condition(),
        "sector": {
            "m_hat": sector.m_hat,
            "m_hat_dense": sector.m_hat_dense,
            "relative_change": sector.relative_change,
            "pass": sector.pass,
            "offending_eigenvalue": sector.offending_eigenvalue,
            "declared_m": sector.declared_m,
        },
        "powers": powers,
        "resolvents": resolvents,
    });
    Ok(out)
}
