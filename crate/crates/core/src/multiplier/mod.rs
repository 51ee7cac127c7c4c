//! Operator-valued Fourier multipliers `T_m f = F^{-1}[m Ff]` and the
//! numerical checks of the sufficient conditions for their boundedness.

mod conditions;
mod convolution;
mod scale;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_ft, inverse_ft, Domain, Fiber, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64, ONE, ZERO};
use crate::opcalc::MatrixSpec;
use crate::spaces::lp_norm;
use crate::weights::Weight;

pub use conditions::{
    check_hormander, check_mikhlin, closed_form_derivative, lemma_bounds, refinement_study, ConditionReport,
    ConditionTerm, LemmaBounds, Refinement, RefinementReport, MAX_REFINEMENT_GROWTH,
};
pub use convolution::{
    check_convolution_bound, check_convolution_bounds, convolve, ConvolutionReport, ProbeRatio, CONVOLUTION_TOLERANCE,
};
pub use scale::{
    block_symbol, estimate_m_p_gamma, symbol_sup, verify_besov_multiplier_bound, BesovBoundReport, BlockConstant,
    ScaleEntry, ScaleReport, DEFAULT_SCALE_RANGE, MAX_TOP_OCTAVE,
};

/// A closed-form symbol `m: R^N -> C^{d x d}`, re-evaluable anywhere.
pub trait SymbolFn: Send + Sync {
    fn fiber_dim(&self) -> usize;
    /// Row-major `m(xi)` written into `out` (length `d * d`).
    fn eval(&self, xi: &[f64], out: &mut [C64]);
}

struct FnSymbol<F> {
    d: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [C64]) + Send + Sync> SymbolFn for FnSymbol<F> {
    fn fiber_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, xi: &[f64], out: &mut [C64]) {
        (self.f)(xi, out)
    }
}

/// Multiplier symbol: a closed form, or matrix samples on a frequency grid.
#[derive(Clone)]
pub enum Symbol {
    ClosedForm { name: String, f: Arc<dyn SymbolFn> },
    Sampled { name: String, samples: SampledFunction },
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::ClosedForm { name, f: s } => {
                write!(f, "ClosedForm({name}, d={})", s.fiber_dim())
            }
            Symbol::Sampled { name, samples } => {
                write!(f, "Sampled({name}, {:?})", samples.fiber())
            }
        }
    }
}

impl Symbol {
    /// Closed-form symbol from a closure.
    pub fn closed<F>(name: impl Into<String>, d: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [C64]) + Send + Sync + 'static,
    {
        Symbol::ClosedForm {
            name: name.into(),
            f: Arc::new(FnSymbol { d, f }),
        }
    }

    /// Scalar closed form `m(xi) I_d`.
    pub fn scalar<F>(name: impl Into<String>, d: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> C64 + Send + Sync + 'static,
    {
        Symbol::closed(name, d, move |xi, out| {
            let v = f(xi);
            out.iter_mut().for_each(|z| *z = ZERO);
            for i in 0..d {
                out[i * d + i] = v;
            }
        })
    }

    /// Samples on the frequency side of a grid.
    pub fn sampled(name: impl Into<String>, samples: SampledFunction) -> Result<Self> {
        if samples.domain() != Domain::Frequency || !matches!(samples.fiber(), Fiber::Matrix(_)) {
            return Err(Error::DimensionMismatch(
                "symbol samples must be matrix-valued on the frequency side".into(),
            ));
        }
        Ok(Symbol::Sampled {
            name: name.into(),
            samples,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Symbol::ClosedForm { name, .. } | Symbol::Sampled { name, .. } => name,
        }
    }

    pub fn fiber_dim(&self) -> usize {
        match self {
            Symbol::ClosedForm { f, .. } => f.fiber_dim(),
            Symbol::Sampled { samples, .. } => samples.fiber().dim(),
        }
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self, Symbol::ClosedForm { .. })
    }

    /// Matrix samples at the frequency nodes of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<SampledFunction> {
        match self {
            Symbol::ClosedForm { f, .. } => {
                let d = f.fiber_dim();
                let values: Vec<C64> = (0..grid.len())
                    .into_par_iter()
                    .flat_map_iter(|n| {
                        let xi = grid.coords(Domain::Frequency, n);
                        let mut out = vec![ZERO; d * d];
                        f.eval(&xi[..grid.dim()], &mut out);
                        out
                    })
                    .collect();
                SampledFunction::from_values(*grid, Domain::Frequency, Fiber::Matrix(d), values)
            }
            Symbol::Sampled { samples, .. } => {
                if samples.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(samples.clone())
            }
        }
    }

    /// `m(a xi)` for a closed form; `None` for sampled symbols.
    pub fn dilated(&self, a: f64) -> Option<Symbol> {
        match self {
            Symbol::ClosedForm { name, f } => {
                let f = f.clone();
                let d = f.fiber_dim();
                Some(Symbol::closed(format!("{name}({a}.)"), d, move |xi, out| {
                    let scaled: Vec<f64> = xi.iter().map(|t| a * t).collect();
                    f.eval(&scaled, out)
                }))
            }
            Symbol::Sampled { .. } => None,
        }
    }

    /// Frequency-pointwise product `self * other`.
    pub fn product(&self, other: &Symbol) -> Result<Symbol> {
        if self.fiber_dim() != other.fiber_dim() {
            return Err(Error::DimensionMismatch("symbol fiber dimensions differ".into()));
        }
        match (self, other) {
            (Symbol::ClosedForm { name: a, f: fa }, Symbol::ClosedForm { name: b, f: fb }) => {
                let (fa, fb) = (fa.clone(), fb.clone());
                let d = fa.fiber_dim();
                Ok(Symbol::closed(format!("{a}*{b}"), d, move |xi, out| {
                    let mut x = vec![ZERO; d * d];
                    let mut y = vec![ZERO; d * d];
                    fa.eval(xi, &mut x);
                    fb.eval(xi, &mut y);
                    linalg::matmul(&x, &y, d, out);
                }))
            }
            _ => Err(Error::InvalidParameter(
                "products are only formed for closed-form symbols".into(),
            )),
        }
    }
}

/// `T_m f = F^{-1}[m(.) (F f)(.)]`.
pub fn apply_multiplier(m: &Symbol, f: &SampledFunction) -> Result<SampledFunction> {
    let samples = m.sample(f.grid())?;
    apply_sampled(&samples, f)
}

/// [`apply_multiplier`] with symbol samples already on `f`'s grid.
pub fn apply_sampled(samples: &SampledFunction, f: &SampledFunction) -> Result<SampledFunction> {
    let d = samples.fiber().dim();
    if f.fiber() != Fiber::Vector(d) {
        return Err(Error::DimensionMismatch(format!(
            "symbol of size {d} applied to {:?}",
            f.fiber()
        )));
    }
    if samples.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    let hat = forward_ft(f)?;
    let mut out = hat.clone();
    let mut tmp = vec![ZERO; d];
    for (n, chunk) in out.values_mut().chunks_mut(d).enumerate() {
        linalg::matvec(samples.node(n), chunk, &mut tmp);
        chunk.copy_from_slice(&tmp);
    }
    inverse_ft(&out)
}

/// Built-in symbols addressable by name.
///
/// String forms: `identity[:d]`, `shift:h[:d]`, `resolvent-sigma:a1;a2;...,lambda`
/// (diagonal `A`), `riesz-like[:d]`, `bessel[:d]`, `jump[:d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    Identity {
        #[serde(default = "one")]
        d: usize,
    },
    /// `exp(i h sum_j xi_j) I`: translation by `h` along every axis.
    Shift {
        h: f64,
        #[serde(default = "one")]
        d: usize,
    },
    /// `|xi|^2 (A + |xi|^2 + lambda)^{-1}`.
    ResolventSigma {
        a: MatrixSpec,
        lambda: f64,
        #[serde(default)]
        lambda_im: f64,
    },
    /// `xi_1 / sqrt(1 + |xi|^2) I`.
    RieszLike {
        #[serde(default = "one")]
        d: usize,
    },
    /// `(1 + |xi|^2)^{-1} I`.
    Bessel {
        #[serde(default = "one")]
        d: usize,
    },
    /// `sign(xi_1) I`, available only as samples.
    Jump {
        #[serde(default = "one")]
        d: usize,
    },
}

fn one() -> usize {
    1
}

impl FromStr for SymbolSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse symbol {s:?}"));
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let dim = |r: Option<&str>| -> Result<usize> {
            match r {
                None => Ok(1),
                Some(t) => t.trim().parse().map_err(|_| bad()),
            }
        };
        Ok(match head.trim() {
            "identity" => SymbolSpec::Identity { d: dim(rest)? },
            "riesz-like" => SymbolSpec::RieszLike { d: dim(rest)? },
            "bessel" => SymbolSpec::Bessel { d: dim(rest)? },
            "jump" => SymbolSpec::Jump { d: dim(rest)? },
            "shift" => {
                let rest = rest.ok_or_else(bad)?;
                let mut parts = rest.split(':');
                let h = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
                let d = dim(parts.next())?;
                SymbolSpec::Shift { h, d }
            }
            "resolvent-sigma" => {
                let rest = rest.ok_or_else(bad)?;
                let (diag, lambda) = rest.split_once(',').ok_or_else(bad)?;
                let entries: Vec<f64> = diag
                    .split(';')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                let d = entries.len();
                let rows = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| if i == j { [entries[i], 0.0] } else { [0.0, 0.0] })
                            .collect()
                    })
                    .collect();
                SymbolSpec::ResolventSigma {
                    a: MatrixSpec(rows),
                    lambda: lambda.trim().parse().map_err(|_| bad())?,
                    lambda_im: 0.0,
                }
            }
            _ => return Err(bad()),
        })
    }
}

/// Config form of a symbol: either the short string or the tagged object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolRef {
    Name(String),
    Spec(SymbolSpec),
}

impl SymbolRef {
    pub fn spec(&self) -> Result<SymbolSpec> {
        match self {
            SymbolRef::Name(s) => s.parse(),
            SymbolRef::Spec(s) => Ok(s.clone()),
        }
    }
}

fn radius2(xi: &[f64]) -> f64 {
    xi.iter().map(|t| t * t).sum()
}

impl SymbolSpec {
    pub fn fiber_dim(&self) -> usize {
        match self {
            SymbolSpec::Identity { d }
            | SymbolSpec::Shift { d, .. }
            | SymbolSpec::RieszLike { d }
            | SymbolSpec::Bessel { d }
            | SymbolSpec::Jump { d } => *d,
            SymbolSpec::ResolventSigma { a, .. } => a.0.len(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SymbolSpec::Identity { .. } => "identity".into(),
            SymbolSpec::Shift { h, .. } => format!("shift:{h}"),
            SymbolSpec::ResolventSigma { lambda, .. } => {
                format!("resolvent-sigma(lambda={lambda})")
            }
            SymbolSpec::RieszLike { .. } => "riesz-like".into(),
            SymbolSpec::Bessel { .. } => "bessel".into(),
            SymbolSpec::Jump { .. } => "jump".into(),
        }
    }

    /// Build the symbol; sample-only kinds are sampled on `grid`.
    pub fn build(&self, grid: &Grid) -> Result<Symbol> {
        let name = self.label();
        let d = self.fiber_dim();
        if d == 0 {
            return Err(Error::InvalidParameter(
                "symbol fiber dimension must be positive".into(),
            ));
        }
        Ok(match self {
            SymbolSpec::Identity { .. } => Symbol::scalar(name, d, |_| ONE),
            SymbolSpec::Shift { h, .. } => {
                let h = *h;
                Symbol::scalar(name, d, move |xi| C64::from_polar(1.0, h * xi.iter().sum::<f64>()))
            }
            SymbolSpec::RieszLike { .. } => {
                Symbol::scalar(name, d, |xi| C64::new(xi[0] / (1.0 + radius2(xi)).sqrt(), 0.0))
            }
            SymbolSpec::Bessel { .. } => Symbol::scalar(name, d, |xi| C64::new(1.0 / (1.0 + radius2(xi)), 0.0)),
            SymbolSpec::ResolventSigma { a, lambda, lambda_im } => {
                resolvent_sigma(name, &a.to_matrix()?, C64::new(*lambda, *lambda_im))?
            }
            SymbolSpec::Jump { .. } => {
                let samples = SampledFunction::from_fn(*grid, Domain::Frequency, Fiber::Matrix(d), |xi, out| {
                    let s = if xi[0] > 0.0 {
                        1.0
                    } else if xi[0] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    out.iter_mut().for_each(|z| *z = ZERO);
                    for i in 0..d {
                        out[i * d + i] = C64::new(s, 0.0);
                    }
                })?;
                Symbol::sampled(name, samples)?
            }
        })
    }
}

/// `sigma(xi) = |xi|^2 (A + |xi|^2 + lambda)^{-1}`, checked to be nonsingular
/// along the real line of `|xi|^2`.
pub fn resolvent_sigma(name: impl Into<String>, a: &DMatrix<C64>, lambda: C64) -> Result<Symbol> {
    let d = a.nrows();
    let rows = linalg::from_dmatrix(a);
    let schur = a.clone().try_schur(f64::EPSILON, 100_000).ok_or(Error::NoConvergence {
        iterations: 100_000,
        increment: f64::NAN,
    })?;
    let t = schur.unpack().1;
    for z in (0..d).map(|i| t[(i, i)]) {
        let shifted = z + lambda;
        if shifted.im.abs() <= 1e-14 * shifted.norm().max(1.0) && shifted.re <= 0.0 {
            return Err(Error::SectorViolation(format!(
                "A + lambda has eigenvalue {shifted} on (-inf, 0]"
            )));
        }
    }
    Ok(Symbol::closed(name, d, move |xi, out| {
        let r2 = radius2(xi);
        let mut m = rows.clone();
        for i in 0..d {
            m[i * d + i] += lambda + r2;
        }
        match linalg::inverse(&m, d) {
            Some(inv) => out.iter_mut().zip(inv).for_each(|(o, v)| *o = v * r2),
            None => out.iter_mut().for_each(|o| *o = C64::new(f64::NAN, 0.0)),
        }
    }))
}

/// Result of [`estimate_fourier_type_constant`].
#[derive(Debug, Clone, Serialize)]
pub struct FourierTypeReport {
    pub p: f64,
    /// `max ||Ff||_{L_{p',1/w}} / ||f||_{L_{p,w}}` over the members.
    pub f_hat: f64,
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub flags: Vec<Flag>,
}

/// Empirical Fourier `gamma`-type constant; a lower bound of the true one.
pub fn estimate_fourier_type_constant(
    p: f64,
    weight: &Weight,
    members: &[SampledFunction],
) -> Result<FourierTypeReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("Fourier type p = {p} not in [1, 2]")));
    }
    let pp = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
    let inv = weight.reciprocal().expect("built-in weights have reciprocals");
    let pairs: Vec<(f64, f64)> = members
        .par_iter()
        .map(|f| -> Result<(f64, f64)> {
            let src = lp_norm(f, p, weight)?;
            let tgt = lp_norm(&forward_ft(f)?, pp, &inv)?;
            Ok((src, tgt))
        })
        .collect::<Result<_>>()?;
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for (src, tgt) in pairs {
        if src == 0.0 {
            skipped += 1;
        } else {
            ratios.push(tgt / src);
        }
    }
    let f_hat = ratios.iter().copied().fold(0.0, f64::max);
    Ok(FourierTypeReport {
        p,
        f_hat,
        ratios,
        skipped,
        flags: vec![Flag::LowerBound],
    })
}
