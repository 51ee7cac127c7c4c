//! Weighted Lebesgue and Besov norms, the Besov-Lions norm, and numerical
//! checks of the embedding statements.
//!
//! All integrals use the midpoint rule on the grid of the function's own
//! side, with weight masses from [`WeightFunction::cell_mass`].

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::grid::{forward_ft, push_flag, spectral_derivative, Domain, Fiber, Flag, SampledFunction};
use crate::linalg::{self, C64, ZERO};
use crate::opcalc::PositiveOperator;
use crate::partition::{all_blocks, DyadicSystem};
use crate::weights::{self, check_integrability, IntegrandForm, Weight, WeightFunction};

/// Serde helpers for exponents in `[1, inf]`; infinity is written `"inf"`.
pub mod exponent {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Selects the space `B^s_{q,r,gamma}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovParams {
    #[serde(default)]
    pub s: f64,
    #[serde(with = "exponent", default = "two")]
    pub q: f64,
    #[serde(with = "exponent", default = "two")]
    pub r: f64,
    #[serde(default)]
    pub weight: Weight,
}

fn two() -> f64 {
    2.0
}

impl Default for BesovParams {
    fn default() -> Self {
        BesovParams {
            s: 0.0,
            q: 2.0,
            r: 2.0,
            weight: Weight::unit(),
        }
    }
}

impl BesovParams {
    pub fn new(s: f64, q: f64, r: f64) -> Self {
        BesovParams {
            s,
            q,
            r,
            weight: Weight::unit(),
        }
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        check_exponent(self.q)?;
        check_exponent(self.r)?;
        if !self.s.is_finite() {
            return Err(Error::InvalidParameter(format!("smoothness {}", self.s)));
        }
        self.weight.validate(dim)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent {p} not in [1, inf]")))
    }
}

/// `(k, 2^{ks} ||phi_k^ * f||_{L_{q,gamma}})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockContribution {
    pub k: usize,
    pub contrib: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub blocks: Vec<BlockContribution>,
    pub flags: Vec<Flag>,
}

/// Pointwise fiber norm used inside a weighted integral.
#[derive(Debug, Clone)]
pub enum FiberNorm {
    /// Euclidean norm for vectors, spectral norm for matrices.
    Plain,
    /// Graph norm `||x|| + ||B x||` of a row-major `d x d` matrix `B`.
    Graph(Vec<C64>),
}

impl FiberNorm {
    pub fn graph(op: &PositiveOperator) -> Self {
        FiberNorm::Graph(op.row_major())
    }

    fn eval(&self, fiber: Fiber, v: &[C64], scratch: &mut Vec<C64>) -> f64 {
        match self {
            FiberNorm::Plain => fiber.norm(v),
            FiberNorm::Graph(b) => {
                scratch.resize(v.len(), ZERO);
                linalg::matvec(b, v, scratch);
                linalg::vec_norm(v) + linalg::vec_norm(scratch)
            }
        }
    }
}

/// `l_r` aggregation of non-negative terms.
pub fn aggregate_lr(terms: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        terms.iter().copied().fold(0.0, f64::max)
    } else {
        // Scale by the maximum to avoid overflow in t^r.
        let peak = terms.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        peak * terms.iter().map(|t| (t / peak).powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

/// `L_{q,gamma}` norm of per-node values `norms[n]` on `f`'s side.
fn weighted_lq(f: &SampledFunction, norms: &[f64], q: f64, weight: &Weight) -> f64 {
    let grid = f.grid();
    let domain = f.domain();
    let h = match domain {
        Domain::Physical => grid.dx(),
        Domain::Frequency => grid.dxi(),
    };
    if q.is_infinite() {
        let mut best: f64 = 0.0;
        for (n, &v) in norms.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let x = grid.coords(domain, n);
            let w = if weight.is_unit() {
                1.0
            } else {
                weight.value(&x[..grid.dim()])
            };
            if w.is_finite() {
                best = best.max(v * w);
            }
        }
        return best;
    }
    let peak = norms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let vol = grid.cell_volume(domain);
    let mut acc = 0.0;
    for (n, &v) in norms.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mass = if weight.is_unit() {
            vol
        } else {
            let x = grid.coords(domain, n);
            weight.cell_mass(&x[..grid.dim()], h)
        };
        acc += (v / peak).powf(q) * mass;
    }
    peak * acc.powf(1.0 / q)
}

fn node_norms(f: &SampledFunction, norm: &FiberNorm) -> Vec<f64> {
    let mut scratch = Vec::new();
    f.nodes().map(|v| norm.eval(f.fiber(), v, &mut scratch)).collect()
}

/// `||f||_{L_{q,gamma}}` with `q` in `[1, inf]`; `q = inf` is the weighted
/// maximum `max_x ||f(x)|| gamma(x)` over nodes where `gamma` is finite.
pub fn lp_norm(f: &SampledFunction, q: f64, weight: &Weight) -> Result<f64> {
    check_exponent(q)?;
    Ok(weighted_lq(f, &node_norms(f, &FiberNorm::Plain), q, weight))
}

/// [`lp_norm`] with an explicit fiber norm.
pub fn lp_norm_with(f: &SampledFunction, q: f64, weight: &Weight, norm: &FiberNorm) -> Result<f64> {
    check_exponent(q)?;
    Ok(weighted_lq(f, &node_norms(f, norm), q, weight))
}

/// `||f||_{B^s_{q,r,gamma}}` with the per-block column.
pub fn besov_norm(f: &SampledFunction, params: &BesovParams, sys: &DyadicSystem) -> Result<NormReport> {
    besov_norm_with(f, params, sys, &FiberNorm::Plain)
}

/// [`besov_norm`] with an explicit fiber norm (used for `E(A)`-valued norms).
pub fn besov_norm_with(
    f: &SampledFunction,
    params: &BesovParams,
    sys: &DyadicSystem,
    norm: &FiberNorm,
) -> Result<NormReport> {
    params.validate(f.grid().dim())?;
    if f.domain() != Domain::Physical {
        return Err(Error::DomainMismatch { expected: "physical" });
    }
    let mut flags = f.diagnose()?;
    let blocks = all_blocks(f, sys)?;
    let contribs: Vec<f64> = blocks
        .par_iter()
        .enumerate()
        .map(|(k, b)| 2f64.powf(k as f64 * params.s) * weighted_lq(b, &node_norms(b, norm), params.q, &params.weight))
        .collect();
    let value = aggregate_lr(&contribs, params.r);
    if value > 0.0 && contribs[sys.k_max()] > 0.01 * value {
        push_flag(&mut flags, Flag::TopBlockDominant);
    }
    Ok(NormReport {
        value,
        blocks: contribs
            .iter()
            .enumerate()
            .map(|(k, &contrib)| BlockContribution { k, contrib })
            .collect(),
        flags,
    })
}

/// Terms of the Besov-Lions norm.
#[derive(Debug, Clone, Serialize)]
pub struct LionsNorm {
    /// `||u||_{B(E(A))}` with the graph norm `||x|| + ||Ax||`.
    pub graph_term: f64,
    /// `||D^l u||_{B(E)}`.
    pub derivative_term: f64,
    pub value: f64,
    pub flags: Vec<Flag>,
}

/// `||u||_{B(E(A))} + ||D^l u||_{B(E)}` on a one-dimensional grid.
pub fn besov_lions_norm(
    u: &SampledFunction,
    l: usize,
    op: &PositiveOperator,
    params: &BesovParams,
    sys: &DyadicSystem,
) -> Result<LionsNorm> {
    if u.grid().dim() != 1 {
        return Err(Error::InvalidParameter(
            "Besov-Lions norm is defined on the line".into(),
        ));
    }
    if u.fiber() != Fiber::Vector(op.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "fiber {:?} vs operator dimension {}",
            u.fiber(),
            op.dim()
        )));
    }
    let graph = besov_norm_with(u, params, sys, &FiberNorm::graph(op))?;
    let deriv = spectral_derivative(u, &[l])?;
    let dnorm = besov_norm(&deriv.value, params, sys)?;
    let mut flags = graph.flags;
    for fl in deriv.flags.into_iter().chain(dnorm.flags) {
        push_flag(&mut flags, fl);
    }
    Ok(LionsNorm {
        graph_term: graph.value,
        derivative_term: dnorm.value,
        value: graph.value + dnorm.value,
        flags,
    })
}

/// Which embedding [`verify_embedding`] measures. Each ratio is
/// `target norm / source norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingKind {
    /// `L_2` against `B^0_{2,2}` (norm equivalence at `s = 0`).
    BesovL2,
    /// `L_inf` against `B^{N/p}_{p,1}`.
    BesovLinf {
        #[serde(default = "two")]
        p: f64,
    },
    /// `W^{l+1}_q -> B^s_{q,r} -> W^l_q -> L_q` with `l = floor(s)`.
    SobolevChain {
        s: f64,
        #[serde(with = "exponent", default = "two")]
        q: f64,
        #[serde(with = "exponent", default = "two")]
        r: f64,
    },
    /// `L_{q,gamma}(box) -> L_{p,gamma~}(box)` with the Hölder bound.
    WeightedLebesgue {
        p: f64,
        q: f64,
        #[serde(default)]
        weight: Weight,
        #[serde(default)]
        weight_tilde: Weight,
    },
    /// `||{f^ chi_{J_m}}||_{l_r(L_{q,gamma~})}` against `B^s_{p,r,gamma}`.
    FourierBlocks {
        p: f64,
        q: f64,
        #[serde(with = "exponent", default = "two")]
        r: f64,
        s: f64,
        #[serde(default)]
        weight: Weight,
        #[serde(default)]
        weight_tilde: Weight,
    },
    /// `F: B^{N/p}_{p,1,gamma} -> L_{1,gamma~}`.
    FourierL1 {
        p: f64,
        #[serde(default)]
        weight: Weight,
        #[serde(default)]
        weight_tilde: Weight,
    },
    /// `F: B^0_{p,p',gamma^{-1}} -> L_{p',gamma^{-1}}`.
    FourierDual {
        p: f64,
        #[serde(default)]
        weight: Weight,
    },
}

/// One link of an embedding: ratios over the usable ensemble members.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingLink {
    pub label: String,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub ratios: Vec<f64>,
    /// Analytic bound on the ratio when one is available.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub kind: EmbeddingKind,
    pub links: Vec<EmbeddingLink>,
    /// Members with a zero source norm.
    pub skipped: usize,
    /// Members carrying resolution or truncation flags.
    pub excluded_unresolved: usize,
}

fn dual(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn sobolev_norm(f: &SampledFunction, l: usize, q: f64) -> Result<f64> {
    let mut total = lp_norm(f, q, &Weight::unit())?;
    for j in 1..=l {
        let mut alpha = vec![0; f.grid().dim()];
        for a in 0..f.grid().dim() {
            alpha[a] = j;
            total += lp_norm(&spectral_derivative(f, &alpha)?.value, q, &Weight::unit())?;
            alpha[a] = 0;
        }
    }
    Ok(total)
}

/// `||{f^ chi_{J_m}}_m||_{l_r(L_{q,w})}` on the frequency side.
pub fn annulus_sequence_norm(hat: &SampledFunction, q: f64, r: f64, weight: &Weight) -> Result<f64> {
    let grid = hat.grid();
    let k_top = grid.xi_max().log2().ceil() as usize + 1;
    let norms = node_norms(hat, &FiberNorm::Plain);
    let mut terms = Vec::with_capacity(k_top + 1);
    for m in 0..=k_top {
        let (lo, hi) = if m == 0 {
            (0.0, 1.0)
        } else {
            (2f64.powi(m as i32 - 1), 2f64.powi(m as i32))
        };
        let masked: Vec<f64> = norms
            .iter()
            .enumerate()
            .map(|(n, &v)| {
                let xi = grid.coords(Domain::Frequency, n);
                let rad = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
                if rad >= lo && rad <= hi {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        terms.push(weighted_lq(hat, &masked, q, weight));
    }
    Ok(aggregate_lr(&terms, r))
}

/// `(source, target)` norms of one member, or `None` when not applicable.
fn link_norms(kind: &EmbeddingKind, f: &SampledFunction, sys: &DyadicSystem) -> Result<Vec<(f64, f64)>> {
    let n = f.grid().dim() as f64;
    Ok(match kind {
        EmbeddingKind::BesovL2 => {
            let b = besov_norm(f, &BesovParams::new(0.0, 2.0, 2.0), sys)?.value;
            vec![(b, lp_norm(f, 2.0, &Weight::unit())?)]
        }
        EmbeddingKind::BesovLinf { p } => {
            let b = besov_norm(f, &BesovParams::new(n / p, *p, 1.0), sys)?.value;
            vec![(b, lp_norm(f, f64::INFINITY, &Weight::unit())?)]
        }
        EmbeddingKind::SobolevChain { s, q, r } => {
            let l = s.floor() as usize;
            let w_hi = sobolev_norm(f, l + 1, *q)?;
            let b = besov_norm(f, &BesovParams::new(*s, *q, *r), sys)?.value;
            let w_lo = sobolev_norm(f, l, *q)?;
            let lq = lp_norm(f, *q, &Weight::unit())?;
            vec![(w_hi, b), (b, w_lo), (w_lo, lq)]
        }
        EmbeddingKind::WeightedLebesgue {
            p,
            q,
            weight,
            weight_tilde,
        } => {
            vec![(lp_norm(f, *q, weight)?, lp_norm(f, *p, weight_tilde)?)]
        }
        EmbeddingKind::FourierBlocks {
            p,
            q,
            r,
            s,
            weight,
            weight_tilde,
        } => {
            let b = besov_norm(f, &BesovParams::new(*s, *p, *r).with_weight(weight.clone()), sys)?.value;
            let t = annulus_sequence_norm(&forward_ft(f)?, *q, *r, weight_tilde)?;
            vec![(b, t)]
        }
        EmbeddingKind::FourierL1 {
            p,
            weight,
            weight_tilde,
        } => {
            let b = besov_norm(f, &BesovParams::new(n / p, *p, 1.0).with_weight(weight.clone()), sys)?.value;
            vec![(b, lp_norm(&forward_ft(f)?, 1.0, weight_tilde)?)]
        }
        EmbeddingKind::FourierDual { p, weight } => {
            let inv = weight.reciprocal().expect("built-in weights have reciprocals");
            let pp = dual(*p);
            let b = besov_norm(f, &BesovParams::new(0.0, *p, pp).with_weight(inv.clone()), sys)?.value;
            vec![(b, lp_norm(&forward_ft(f)?, pp, &inv)?)]
        }
    })
}

fn link_labels(kind: &EmbeddingKind) -> Vec<&'static str> {
    match kind {
        EmbeddingKind::BesovL2 => vec!["L2 / B^0_{2,2}"],
        EmbeddingKind::BesovLinf { .. } => vec!["L_inf / B^{N/p}_{p,1}"],
        EmbeddingKind::SobolevChain { .. } => {
            vec!["B^s_{q,r} / W^{l+1}_q", "W^l_q / B^s_{q,r}", "L_q / W^l_q"]
        }
        EmbeddingKind::WeightedLebesgue { .. } => vec!["L_{p,w~} / L_{q,w}"],
        EmbeddingKind::FourierBlocks { .. } => vec!["l_r(L_{q,w~}) annuli / B^s_{p,r,w}"],
        EmbeddingKind::FourierL1 { .. } => vec!["L_{1,w~}(F f) / B^{N/p}_{p,1,w}"],
        EmbeddingKind::FourierDual { .. } => vec!["L_{p',1/w}(F f) / B^0_{p,p',1/w}"],
    }
}

fn validate_kind(kind: &EmbeddingKind, dim: usize) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    match kind {
        EmbeddingKind::BesovL2 => Ok(()),
        EmbeddingKind::BesovLinf { p } => check_exponent(*p),
        EmbeddingKind::SobolevChain { s, q, r } => {
            check_exponent(*q)?;
            check_exponent(*r)?;
            if *s <= 0.0 || s.fract() == 0.0 {
                return bad(format!("chain needs non-integer s > 0, got {s}"));
            }
            Ok(())
        }
        EmbeddingKind::WeightedLebesgue {
            p,
            q,
            weight,
            weight_tilde,
        } => {
            if !(*p >= 1.0 && q > p && q.is_finite()) {
                return bad(format!("need 1 <= p < q < inf, got p={p}, q={q}"));
            }
            weight.validate(dim)?;
            weight_tilde.validate(dim)
        }
        EmbeddingKind::FourierBlocks {
            p,
            q,
            r,
            s,
            weight,
            weight_tilde,
        } => {
            if !(1.0..=2.0).contains(p) || !(*q >= 1.0 && *q < dual(*p)) {
                return bad(format!("need p in [1,2], 1 <= q < p', got p={p}, q={q}"));
            }
            check_exponent(*r)?;
            let inv_u = 1.0 / q - 1.0 / dual(*p);
            if *s < dim as f64 * inv_u - 1e-12 {
                return bad(format!("need s >= N/u = {}", dim as f64 * inv_u));
            }
            weight.validate(dim)?;
            weight_tilde.validate(dim)
        }
        EmbeddingKind::FourierL1 {
            p,
            weight,
            weight_tilde,
        } => {
            if !(1.0..=2.0).contains(p) {
                return bad(format!("p = {p} not in [1, 2]"));
            }
            weight.validate(dim)?;
            weight_tilde.validate(dim)
        }
        EmbeddingKind::FourierDual { p, weight } => {
            if !(1.0..=2.0).contains(p) {
                return bad(format!("p = {p} not in [1, 2]"));
            }
            weight.validate(dim)
        }
    }
}

/// Hölder bound `(\int [w~^q / w^p]^{1/(q-p)})^{(q-p)/(pq)}` over the grid box.
fn holder_bound(p: f64, q: f64, w: &Weight, wt: &Weight, sys: &DyadicSystem) -> Option<f64> {
    let l = sys.grid().half_width();
    let omega = vec![(-l, l); sys.grid().dim()];
    let rep = check_integrability(w, wt, IntegrandForm::Embedding { p, q }, &omega).ok()?;
    rep.finite.then(|| rep.value.powf((q - p) / (p * q)))
}

/// Maximum over a seeded ensemble of the ratio target/source for `kind`.
pub fn verify_embedding(kind: &EmbeddingKind, ensemble: &EnsembleSpec, sys: &DyadicSystem) -> Result<EmbeddingReport> {
    validate_kind(kind, sys.grid().dim())?;
    let members = ensemble.sample(sys.grid())?;
    verify_embedding_on(kind, &members, sys)
}

/// `(source, target)` norms per link; `None` for a skipped member.
type MemberLinks = Option<Vec<(f64, f64)>>;

/// [`verify_embedding`] on explicit members.
pub fn verify_embedding_on(
    kind: &EmbeddingKind,
    members: &[SampledFunction],
    sys: &DyadicSystem,
) -> Result<EmbeddingReport> {
    validate_kind(kind, sys.grid().dim())?;
    let labels = link_labels(kind);
    let outcomes: Vec<Result<MemberLinks>> = members
        .par_iter()
        .map(|f| {
            if !f.diagnose()?.is_empty() {
                return Ok(None);
            }
            link_norms(kind, f, sys).map(Some)
        })
        .collect();
    let mut per_link: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut skipped = 0;
    let mut excluded = 0;
    for out in outcomes {
        match out? {
            None => excluded += 1,
            Some(pairs) => {
                if pairs.iter().any(|(src, _)| *src == 0.0) {
                    skipped += 1;
                    continue;
                }
                for (i, (src, tgt)) in pairs.into_iter().enumerate() {
                    per_link[i].push(tgt / src);
                }
            }
        }
    }
    let bound = match kind {
        EmbeddingKind::WeightedLebesgue {
            p,
            q,
            weight,
            weight_tilde,
        } => holder_bound(*p, *q, weight, weight_tilde, sys),
        _ => None,
    };
    let links = labels
        .into_iter()
        .zip(per_link)
        .map(|(label, ratios)| EmbeddingLink {
            label: label.to_string(),
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios,
            bound,
        })
        .collect();
    Ok(EmbeddingReport {
        kind: kind.clone(),
        links,
        skipped,
        excluded_unresolved: excluded,
    })
}

/// Weighted cell masses on one side, re-exported for oracle code.
pub fn weight_masses(weight: &Weight, f: &SampledFunction) -> Vec<f64> {
    weights::cell_masses(weight, f.grid(), f.domain())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inverse_ft, Grid};
    use crate::opcalc::{diag, PositiveOperator};
    use crate::partition::build_dyadic_system;

    fn gauss(grid: Grid) -> SampledFunction {
        SampledFunction::scalar(grid, |x| (-x[0] * x[0]).exp()).unwrap()
    }

    #[test]
    fn zero_norms() {
        let g = Grid::default_1d();
        let sys = build_dyadic_system(&g).unwrap();
        let z = SampledFunction::zeros(g, Domain::Physical, Fiber::Vector(2));
        assert_eq!(lp_norm(&z, 2.0, &Weight::unit()).unwrap(), 0.0);
        assert_eq!(besov_norm(&z, &BesovParams::default(), &sys).unwrap().value, 0.0);
    }

    #[test]
    fn indicator_like_bump() {
        // Smooth step of height one on [0, 1]; L2 norm squared is its measure.
        let g = Grid::default_1d();
        let f = SampledFunction::scalar(g, |x| if x[0] >= 0.0 && x[0] < 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((lp_norm(&f, 2.0, &Weight::unit()).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plancherel_partner() {
        let g = Grid::default_1d();
        let f = gauss(g);
        let hat = forward_ft(&f).unwrap();
        let lhs = lp_norm(&f, 2.0, &Weight::unit()).unwrap();
        let rhs = lp_norm(&hat, 2.0, &Weight::unit()).unwrap() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((lhs - rhs).abs() < 1e-8 * lhs);
        let back = inverse_ft(&hat).unwrap();
        assert!(back.sub(&f).unwrap().max_norm() < 1e-14);
    }

    #[test]
    fn sup_norm_is_weighted_max() {
        let g = Grid::default_1d();
        let f = gauss(g);
        let v = lp_norm(&f, f64::INFINITY, &Weight::ShiftedPower { k: 2.0 }).unwrap();
        // max (1+x)^2 e^{-x^2} at x = (sqrt 5 - 1)/2.
        let x: f64 = (5f64.sqrt() - 1.0) / 2.0;
        let exact = (1.0 + x).powi(2) * (-x * x).exp();
        assert!(v <= exact && v > exact - 1e-3);
    }

    #[test]
    fn homogeneity_and_monotonicity_in_r() {
        let g = Grid::default_1d();
        let sys = build_dyadic_system(&g).unwrap();
        let f = gauss(g);
        let p = BesovParams::new(1.0, 2.0, 1.0);
        let a = besov_norm(&f, &p, &sys).unwrap().value;
        let b = besov_norm(&f.scaled(C64::new(0.0, -3.0)), &p, &sys).unwrap().value;
        assert!((b - 3.0 * a).abs() < 1e-12 * b);
        let r2 = besov_norm(&f, &BesovParams::new(1.0, 2.0, 2.0), &sys).unwrap().value;
        let ri = besov_norm(&f, &BesovParams::new(1.0, 2.0, f64::INFINITY), &sys)
            .unwrap()
            .value;
        assert!(ri <= r2 + 1e-12 && r2 <= a + 1e-12);
    }

    #[test]
    fn lions_norm_identity_and_diagonal() {
        let g = Grid::default_1d();
        let sys = build_dyadic_system(&g).unwrap();
        let p = BesovParams::default();
        let u = gauss(g);
        let b = besov_norm(&u, &p, &sys).unwrap().value;
        let id = PositiveOperator::identity(1);
        let ln = besov_lions_norm(&u, 0, &id, &p, &sys).unwrap();
        assert!((ln.graph_term - 2.0 * b).abs() < 1e-12 * b);
        assert!((ln.value - 3.0 * b).abs() < 1e-12 * b);

        let op = PositiveOperator::new(diag(&[1.0, 4.0]), 0.0).unwrap();
        let pair = SampledFunction::from_fn(g, Domain::Physical, Fiber::Vector(2), |x, out| {
            out[0] = C64::new((-x[0] * x[0]).exp(), 0.0);
            out[1] = ZERO;
        })
        .unwrap();
        let ln = besov_lions_norm(&pair, 1, &op, &p, &sys).unwrap();
        let d = spectral_derivative(&u, &[1]).unwrap().value;
        let db = besov_norm(&d, &p, &sys).unwrap().value;
        assert!((ln.graph_term - 2.0 * b).abs() < 1e-12 * b);
        assert!((ln.derivative_term - db).abs() < 1e-12 * db);
    }

    #[test]
    fn params_parse_infinity() {
        let p: BesovParams = serde_json::from_str(r#"{"s": 1, "q": "inf", "r": 1}"#).unwrap();
        assert!(p.q.is_infinite());
        let back = serde_json::to_string(&p).unwrap();
        assert!(back.contains("\"q\":\"inf\""));
        assert!(serde_json::from_str::<BesovParams>(r#"{"q": "big"}"#).is_err());
    }

    #[test]
    fn aggregate() {
        assert_eq!(aggregate_lr(&[3.0, 4.0], 2.0), 5.0);
        assert_eq!(aggregate_lr(&[3.0, 4.0], f64::INFINITY), 4.0);
        assert_eq!(aggregate_lr(&[0.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn zero_member_is_skipped() {
        let g = Grid::new(1, 32.0, 1024).unwrap();
        let sys = build_dyadic_system(&g).unwrap();
        let members = vec![SampledFunction::zeros(g, Domain::Physical, Fiber::Vector(1)), gauss(g)];
        let rep = verify_embedding_on(&EmbeddingKind::BesovL2, &members, &sys).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.links[0].ratios.len(), 1);
    }
}
