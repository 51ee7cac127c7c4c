//! Closed-form weights and numerical checks of the weight hypotheses used by
//! the multiplier theorems: sub-multiplicativity
//! `sup_t w(t) / w(t - s) <= C w(s)` and local integrability of the
//! embedding integrands.
//!
//! Two integrands are implemented literally even though their exponent
//! patterns disagree: the Hölder embedding
//! `[w~^q / w^p]^{1/(q-p)}` and the Fourier-embedding form
//! `[w^q w~^{p'}]^{1/(p'-q)}`. Neither is rewritten into the other.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Flag, Grid};
use crate::quadrature;

/// Anything that can act as a positive weight on `R^N`.
pub trait WeightFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn ln_value(&self, x: &[f64]) -> f64 {
        self.value(x).ln()
    }

    /// `\int_cell w` for the axis-aligned cell of side `h` centred at `x`.
    fn cell_mass(&self, x: &[f64], h: f64) -> f64 {
        self.value(x) * h.powi(x.len() as i32)
    }

    fn is_unit(&self) -> bool {
        false
    }
}

/// Built-in weights, serialized as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Weight {
    /// `w(x) = value`.
    Constant { value: f64 },
    /// `w(x) = |x|^alpha`, `alpha > -N`.
    Power { alpha: f64 },
    /// `w(x) = (1 + |x|)^k`.
    ShiftedPower { k: f64 },
    /// `w(x) = exp(c |x|)`.
    Exponential { c: f64 },
    /// `w(x) = exp(c |x|^2)`; not sub-multiplicative for `c > 0`.
    Gaussian { c: f64 },
    /// `w(x) = prod_k (1 + sum_j |x_j|^{alphas[k][j]})^{betas[k]}`.
    Product { alphas: Vec<Vec<f64>>, betas: Vec<f64> },
}

impl Default for Weight {
    fn default() -> Self {
        Weight::unit()
    }
}

impl Weight {
    pub fn unit() -> Self {
        Weight::Constant { value: 1.0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Weight::Constant { value } if !(value.is_finite() && *value > 0.0) => {
                bad(format!("constant weight {value} must be positive"))
            }
            Weight::Power { alpha } if !(alpha.is_finite() && *alpha > -(dim as f64)) => {
                bad(format!("power weight exponent {alpha} must exceed -{dim}"))
            }
            Weight::ShiftedPower { k } | Weight::Exponential { c: k } | Weight::Gaussian { c: k } if !k.is_finite() => {
                bad("non-finite weight parameter".into())
            }
            Weight::Product { alphas, betas } => {
                if alphas.len() != betas.len() || alphas.is_empty() {
                    return bad("product weight needs one beta per factor".into());
                }
                for row in alphas {
                    if row.len() != dim || row.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                        return bad(format!(
                            "product weight exponents must be {dim} non-negative reals per factor"
                        ));
                    }
                }
                if betas.iter().any(|b| !b.is_finite()) {
                    return bad("non-finite product exponent".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Declared sub-multiplicativity constant for weights known to satisfy
    /// `w(t) <= C w(t - s) w(s)`; `None` when the weight is not in the
    /// compliant registry.
    pub fn declared_constant(&self) -> Option<f64> {
        match self {
            Weight::Constant { value } => Some(1.0 / value),
            Weight::ShiftedPower { k } if *k >= 0.0 => Some(1.0),
            Weight::Exponential { c } if *c >= 0.0 => Some(1.0),
            Weight::Product { alphas, betas } if betas.iter().all(|b| *b >= 0.0) => {
                // |t_j|^a <= 2^{a-1}(|t_j - s_j|^a + |s_j|^a) for a > 1.
                let c = alphas
                    .iter()
                    .zip(betas)
                    .map(|(row, b)| {
                        let amax = row.iter().copied().fold(0.0, f64::max);
                        2f64.powf((amax - 1.0).max(0.0) * b)
                    })
                    .product();
                Some(c)
            }
            _ => None,
        }
    }

    /// Reciprocal weight `1 / w`, when it is again a built-in kind.
    pub fn reciprocal(&self) -> Option<Weight> {
        Some(match self {
            Weight::Constant { value } => Weight::Constant { value: 1.0 / value },
            Weight::Power { alpha } => Weight::Power { alpha: -alpha },
            Weight::ShiftedPower { k } => Weight::ShiftedPower { k: -k },
            Weight::Exponential { c } => Weight::Exponential { c: -c },
            Weight::Gaussian { c } => Weight::Gaussian { c: -c },
            Weight::Product { alphas, betas } => Weight::Product {
                alphas: alphas.clone(),
                betas: betas.iter().map(|b| -b).collect(),
            },
        })
    }

    fn radius(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl WeightFunction for Weight {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Constant { value } => *value,
            _ => self.ln_value(x).exp(),
        }
    }

    fn ln_value(&self, x: &[f64]) -> f64 {
        let r = Weight::radius(x);
        match self {
            Weight::Constant { value } => value.ln(),
            Weight::Power { alpha } => {
                if *alpha == 0.0 {
                    0.0
                } else {
                    alpha * r.ln()
                }
            }
            Weight::ShiftedPower { k } => k * r.ln_1p(),
            Weight::Exponential { c } => c * r,
            Weight::Gaussian { c } => c * r * r,
            Weight::Product { alphas, betas } => alphas
                .iter()
                .zip(betas)
                .map(|(row, b)| {
                    let s: f64 = row.iter().zip(x).map(|(a, xj)| xj.abs().powf(*a)).sum();
                    b * s.ln_1p()
                })
                .sum(),
        }
    }

    fn cell_mass(&self, x: &[f64], h: f64) -> f64 {
        let dim = x.len() as i32;
        if let Weight::Power { alpha } = self {
            if *alpha < 0.0 && Weight::radius(x) < 0.25 * h {
                // Origin cell: integrate |x|^alpha analytically (2-d uses the
                // disc of equal area).
                return if dim == 1 {
                    2.0 * (0.5 * h).powf(alpha + 1.0) / (alpha + 1.0)
                } else {
                    let rho = h / PI.sqrt();
                    2.0 * PI * rho.powf(alpha + 2.0) / (alpha + 2.0)
                };
            }
        }
        self.value(x) * h.powi(dim)
    }

    fn is_unit(&self) -> bool {
        matches!(self, Weight::Constant { value } if *value == 1.0)
    }
}

/// Result of [`check_submultiplicative`].
#[derive(Debug, Clone, Serialize)]
pub struct SubmultiplicativeReport {
    /// `max w(t) / (w(t - s) w(s))` over the sampled pairs; may be infinite.
    pub c_hat: f64,
    pub declared: Option<f64>,
    pub pass: bool,
    /// Pair `(t, s)` attaining the maximum.
    pub worst_pair: (Vec<f64>, Vec<f64>),
    /// Pairs skipped because a weight evaluated to zero or infinity.
    pub degenerate_pairs: usize,
    pub flags: Vec<Flag>,
}

/// How differences `t - s` are formed when sampling pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Differences {
    /// Plain differences in `R^N`.
    Euclidean,
    /// Differences wrapped into the periodic box `[-L, L)^N`.
    Periodic,
}

fn sample_axis(grid: &Grid, max_per_axis: usize) -> Vec<f64> {
    let m = grid.points_per_axis();
    let stride = m.div_ceil(max_per_axis).max(1);
    let mut out: Vec<f64> = (0..m).step_by(stride).map(|j| grid.x_axis(j)).collect();
    let last = grid.x_axis(m - 1);
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

fn sample_points(grid: &Grid) -> Vec<Vec<f64>> {
    if grid.dim() == 1 {
        sample_axis(grid, 2048).into_iter().map(|x| vec![x]).collect()
    } else {
        let axis = sample_axis(grid, 64);
        let mut pts = Vec::with_capacity(axis.len() * axis.len());
        for &a in &axis {
            for &b in &axis {
                pts.push(vec![a, b]);
            }
        }
        pts
    }
}

/// Estimate the sub-multiplicativity constant over pairs of grid nodes.
///
/// `bound` overrides the registry constant; with neither available the
/// check fails. Work is done in log space so that fast-growing weights
/// report an infinite constant instead of `NaN`.
pub fn check_submultiplicative<W: WeightFunction + ?Sized>(
    weight: &W,
    grid: &Grid,
    bound: Option<f64>,
    differences: Differences,
) -> SubmultiplicativeReport {
    let pts = sample_points(grid);
    let period = 2.0 * grid.half_width();
    let wrap = |v: f64| -> f64 {
        match differences {
            Differences::Euclidean => v,
            Differences::Periodic => v - period * ((v + 0.5 * period) / period).floor(),
        }
    };
    let ln_w: Vec<f64> = pts.iter().map(|p| weight.ln_value(p)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut worst_pair = (vec![0.0; grid.dim()], vec![0.0; grid.dim()]);
    let mut degenerate = 0usize;
    let mut diff = vec![0.0; grid.dim()];
    for (ti, t) in pts.iter().enumerate() {
        for (si, s) in pts.iter().enumerate() {
            for a in 0..grid.dim() {
                diff[a] = wrap(t[a] - s[a]);
            }
            let ld = weight.ln_value(&diff);
            let val = ln_w[ti] - ld - ln_w[si];
            if !val.is_finite() {
                if val == f64::INFINITY && ln_w[ti].is_finite() && ld.is_finite() && ln_w[si].is_finite() {
                    // Genuine overflow of the ratio.
                } else {
                    degenerate += 1;
                    continue;
                }
            }
            if val > best {
                best = val;
                worst_pair = (t.clone(), s.clone());
            }
        }
    }
    let c_hat = best.exp();
    let declared = bound;
    let pass = match declared {
        Some(c) => c_hat <= c * (1.0 + 1e-12),
        None => false,
    };
    let mut flags = vec![Flag::LowerBound];
    if degenerate > 0 {
        flags.push(Flag::DegeneratePoint);
    }
    SubmultiplicativeReport {
        c_hat,
        declared,
        pass,
        worst_pair,
        degenerate_pairs: degenerate,
        flags,
    }
}

/// [`check_submultiplicative`] for a built-in weight, using its registry
/// constant when no explicit bound is given.
pub fn check_weight_submultiplicative(
    weight: &Weight,
    grid: &Grid,
    bound: Option<f64>,
    differences: Differences,
) -> SubmultiplicativeReport {
    let declared = bound.or_else(|| weight.declared_constant());
    check_submultiplicative(weight, grid, declared, differences)
}

/// Which weight integrand to test for local integrability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum IntegrandForm {
    /// `[w~^q / w^p]^{1/(q-p)}`, `p < q`: `L_{q,w} -> L_{p,w~}` on the box.
    Embedding { p: f64, q: f64 },
    /// `[w^q w~^{p'}]^{1/(p'-q)}`, `q < p'`.
    FourierEmbedding { p: f64, q: f64 },
    /// `[w^{1-1/p} w~]^p`.
    LocalCondition { p: f64 },
    /// `w^p` (single-weight local condition).
    LocalSingle { p: f64 },
}

/// Result of [`check_integrability`].
#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub finite: bool,
    /// Extrapolated value when finite; last partial sum otherwise.
    pub value: f64,
    /// Partial sums at successive grading depths.
    pub partial_sums: Vec<f64>,
}

fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Log of the integrand for `form` at `x`.
pub fn ln_integrand<W1, W2>(form: IntegrandForm, w: &W1, w_tilde: &W2, x: &[f64]) -> f64
where
    W1: WeightFunction + ?Sized,
    W2: WeightFunction + ?Sized,
{
    match form {
        IntegrandForm::Embedding { p, q } => (q * w_tilde.ln_value(x) - p * w.ln_value(x)) / (q - p),
        IntegrandForm::FourierEmbedding { p, q } => {
            let pp = dual_exponent(p);
            if pp.is_infinite() {
                w_tilde.ln_value(x)
            } else {
                (q * w.ln_value(x) + pp * w_tilde.ln_value(x)) / (pp - q)
            }
        }
        IntegrandForm::LocalCondition { p } => p * ((1.0 - 1.0 / p) * w.ln_value(x) + w_tilde.ln_value(x)),
        IntegrandForm::LocalSingle { p } => p * w.ln_value(x),
    }
}

/// Integrate the chosen integrand over the box `omega` (one `(a, b)` per
/// axis) with rules graded toward the origin, and decide finiteness from the
/// behaviour of successive increments.
pub fn check_integrability<W1, W2>(
    w: &W1,
    w_tilde: &W2,
    form: IntegrandForm,
    omega: &[(f64, f64)],
) -> Result<IntegrabilityReport>
where
    W1: WeightFunction + ?Sized,
    W2: WeightFunction + ?Sized,
{
    match form {
        IntegrandForm::Embedding { p, q } if !(p >= 1.0 && q > p) => {
            return Err(Error::InvalidParameter(format!(
                "embedding form needs 1 <= p < q, got p={p}, q={q}"
            )));
        }
        IntegrandForm::FourierEmbedding { p, q } if !((1.0..=2.0).contains(&p) && q >= 1.0 && q < dual_exponent(p)) => {
            return Err(Error::InvalidParameter(format!(
                "Fourier form needs p in [1,2], 1 <= q < p', got p={p}, q={q}"
            )));
        }
        IntegrandForm::LocalCondition { p } | IntegrandForm::LocalSingle { p } if p < 1.0 => {
            return Err(Error::InvalidParameter(format!("p = {p} < 1")));
        }
        _ => {}
    }
    if omega.is_empty() || omega.len() > 2 || omega.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(Error::InvalidParameter(
            "box must be 1 or 2 finite non-empty intervals".into(),
        ));
    }
    let dim = omega.len();
    let levels: Vec<usize> = if dim == 1 {
        (4..=80).collect()
    } else {
        (1..=15).map(|j| 4 * j).collect()
    };
    let eval = |x: &[f64]| -> f64 {
        let v = ln_integrand(form, w, w_tilde, x).exp();
        if v.is_nan() {
            0.0
        } else {
            v
        }
    };
    let mut sums = Vec::with_capacity(levels.len());
    for &level in &levels {
        let s = if dim == 1 {
            quadrature::graded_rule(omega[0].0, omega[0].1, level)
                .iter()
                .map(|&(x, wt)| wt * eval(&[x]))
                .sum::<f64>()
        } else {
            let rx = quadrature::graded_rule(omega[0].0, omega[0].1, level);
            let ry = quadrature::graded_rule(omega[1].0, omega[1].1, level);
            let mut acc = 0.0;
            for &(x, wx) in &rx {
                for &(y, wy) in &ry {
                    acc += wx * wy * eval(&[x, y]);
                }
            }
            acc
        };
        sums.push(s);
        if !s.is_finite() {
            break;
        }
    }
    Ok(classify_partial_sums(sums))
}

fn classify_partial_sums(sums: Vec<f64>) -> IntegrabilityReport {
    let last = *sums.last().unwrap();
    if !last.is_finite() {
        return IntegrabilityReport {
            finite: false,
            value: f64::INFINITY,
            partial_sums: sums,
        };
    }
    let n = sums.len();
    let inc: Vec<f64> = sums.windows(2).map(|w| w[1] - w[0]).collect();
    let d_last = inc[n - 2];
    let d_prev = inc[n - 3];
    let scale = last.abs().max(f64::MIN_POSITIVE);
    if d_last.abs() <= 1e-15 * scale {
        return IntegrabilityReport {
            finite: true,
            value: last,
            partial_sums: sums,
        };
    }
    let ratio = d_last / d_prev;
    // Non-shrinking increments at the finest grading mean the contribution of
    // each dyadic shell around the origin does not decay.
    if !(ratio.is_finite()) || !(0.0..0.99).contains(&ratio) {
        return IntegrabilityReport {
            finite: false,
            value: last,
            partial_sums: sums,
        };
    }
    let tail = d_last * ratio / (1.0 - ratio);
    IntegrabilityReport {
        finite: true,
        value: last + tail,
        partial_sums: sums,
    }
}

/// Weighted cell masses for every node of `grid` on the chosen side.
pub fn cell_masses<W: WeightFunction + ?Sized>(weight: &W, grid: &Grid, domain: Domain) -> Vec<f64> {
    let h = match domain {
        Domain::Physical => grid.dx(),
        Domain::Frequency => grid.dxi(),
    };
    (0..grid.len())
        .map(|n| {
            let x = grid.coords(domain, n);
            weight.cell_mass(&x[..grid.dim()], h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: f64) -> Grid {
        Grid::new(1, l, 256).unwrap()
    }

    #[test]
    fn serde_shape() {
        let w = Weight::ShiftedPower { k: 2.0 };
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"kind":"shifted_power","params":{"k":2.0}}"#);
        let back: Weight = serde_json::from_str(r#"{"kind":"power","params":{"alpha":0.5}}"#).unwrap();
        assert_eq!(back, Weight::Power { alpha: 0.5 });
    }

    #[test]
    fn validation() {
        assert!(Weight::Power { alpha: -1.5 }.validate(1).is_err());
        assert!(Weight::Power { alpha: -1.5 }.validate(2).is_ok());
        assert!(Weight::Constant { value: 0.0 }.validate(1).is_err());
        let bad = Weight::Product {
            alphas: vec![vec![-1.0]],
            betas: vec![1.0],
        };
        assert!(bad.validate(1).is_err());
    }

    #[test]
    fn shifted_power_is_submultiplicative() {
        let w = Weight::ShiftedPower { k: 2.0 };
        let r = check_weight_submultiplicative(&w, &grid(16.0), None, Differences::Euclidean);
        assert!(r.c_hat <= 1.0 + 1e-12, "{}", r.c_hat);
        assert!(r.pass);
    }

    #[test]
    fn exponential_is_submultiplicative() {
        let w = Weight::Exponential { c: 1.0 };
        let r = check_weight_submultiplicative(&w, &grid(16.0), None, Differences::Euclidean);
        assert!(r.c_hat <= 1.0 + 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn gaussian_weight_constant_grows_with_box() {
        let w = Weight::Gaussian { c: 1.0 };
        let small = check_weight_submultiplicative(&w, &grid(4.0), None, Differences::Euclidean);
        let large = check_weight_submultiplicative(&w, &grid(8.0), None, Differences::Euclidean);
        assert!(!small.pass && !large.pass);
        assert!(large.c_hat > small.c_hat * 1e10);
        // Attained at t = 2s with s near the edge: exp(2 s^2).
        assert!(small.c_hat >= (2.0f64 * 1.9 * 1.9).exp());
    }

    #[test]
    fn power_weight_reports_degenerate_points() {
        let w = Weight::Power { alpha: 1.0 };
        let r = check_weight_submultiplicative(&w, &grid(4.0), Some(10.0), Differences::Euclidean);
        assert!(r.degenerate_pairs > 0);
        assert!(r.flags.contains(&Flag::DegeneratePoint));
    }

    #[test]
    fn integrability_constant_weights_gives_volume() {
        let one = Weight::unit();
        for (p, q) in [(1.0, 2.0), (1.5, 4.0), (2.0, 3.0)] {
            let r = check_integrability(&one, &one, IntegrandForm::Embedding { p, q }, &[(-1.0, 1.0)]).unwrap();
            assert!(r.finite);
            assert!((r.value - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_exponents_rejected() {
        let one = Weight::unit();
        assert!(check_integrability(&one, &one, IntegrandForm::Embedding { p: 2.0, q: 2.0 }, &[(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn square_root_weight_is_integrable_reciprocal() {
        // [1 / |x|^{1/2}]^{1/(2-1)} = |x|^{-1/2}; integral over [-1, 1] is 4.
        let w = Weight::Power { alpha: 0.5 };
        let r = check_integrability(
            &w,
            &Weight::unit(),
            IntegrandForm::Embedding { p: 1.0, q: 2.0 },
            &[(-1.0, 1.0)],
        )
        .unwrap();
        assert!(r.finite);
        assert!((r.value - 4.0).abs() < 1e-8, "{}", r.value);
    }

    #[test]
    fn linear_weight_reciprocal_diverges() {
        let w = Weight::Power { alpha: 1.0 };
        let r = check_integrability(
            &w,
            &Weight::unit(),
            IntegrandForm::Embedding { p: 1.0, q: 2.0 },
            &[(-1.0, 1.0)],
        )
        .unwrap();
        assert!(!r.finite);
    }

    #[test]
    fn local_condition_closed_form() {
        let wt = Weight::ShiftedPower { k: -2.0 };
        let r = check_integrability(
            &Weight::unit(),
            &wt,
            IntegrandForm::LocalCondition { p: 2.0 },
            &[(-1.0, 1.0)],
        )
        .unwrap();
        assert!(r.finite);
        assert!((r.value - 7.0 / 12.0).abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_singular_integrand() {
        // |x|^{-1} in 2-d is integrable; over [-1,1]^2 the value is
        // 8 asinh(1) = 8 ln(1 + sqrt 2).
        let w = Weight::Power { alpha: 1.0 };
        let r = check_integrability(
            &w,
            &Weight::unit(),
            IntegrandForm::Embedding { p: 1.0, q: 2.0 },
            &[(-1.0, 1.0), (-1.0, 1.0)],
        )
        .unwrap();
        assert!(r.finite);
        let exact = 8.0 * (1.0 + 2f64.sqrt()).ln();
        assert!((r.value - exact).abs() < 1e-6 * exact, "{} vs {exact}", r.value);
    }

    #[test]
    fn origin_cell_is_integrated_analytically() {
        let w = Weight::Power { alpha: -0.5 };
        let h = 0.1;
        let m = w.cell_mass(&[0.0], h);
        assert!((m - 2.0 * (0.05f64).sqrt() / 0.5).abs() < 1e-14);
        assert!(w.cell_mass(&[0.3], h).is_finite());
    }
}
