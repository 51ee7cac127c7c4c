//! Weighted convolution bound for operator-valued kernels.
//!
//! Everything is discrete and periodic: `(Kf)(x_i) = sum_n k(x_i - x_n) f(x_n) dx^N`
//! with differences wrapped into the box, and `L_{q,w}` norms use point
//! masses `w(x_n) dx^N` (`q = inf` is `max_n ||f(x_n)|| w(x_n)`). With the
//! sub-multiplicativity constant measured on wrapped differences the bound
//! holds exactly for these discrete operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{forward_ft, Domain, Fiber, Flag, Grid, SampledFunction};
use crate::linalg::{self, C64, ZERO};
use crate::spaces::exponent;
use crate::weights::{check_submultiplicative, Differences, Weight, WeightFunction};

/// Periodic direct convolution `k * f` on `f`'s grid.
pub fn convolve(kernel: &SampledFunction, f: &SampledFunction) -> Result<SampledFunction> {
    let d = check_kernel(kernel)?;
    if f.fiber() != Fiber::Vector(d) || f.domain() != Domain::Physical {
        return Err(Error::DimensionMismatch(format!(
            "kernel of size {d} applied to {:?}",
            f.fiber()
        )));
    }
    if f.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *f.grid();
    let m = grid.points_per_axis();
    let half = m / 2;
    let vol = grid.cell_volume(Domain::Physical);
    let kv = kernel.values();
    let fv = f.values();
    let wrap = |i: usize, n: usize| (i + m + half - n) % m;
    let values: Vec<C64> = (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let ii = grid.axis_indices(i);
            let mut acc = vec![ZERO; d];
            for n in 0..grid.len() {
                let nn = grid.axis_indices(n);
                let mut idx = [0usize; 2];
                for a in 0..grid.dim() {
                    idx[a] = wrap(ii[a], nn[a]);
                }
                let kk = &kv[grid.flat_index(idx) * d * d..][..d * d];
                let x = &fv[n * d..(n + 1) * d];
                for r in 0..d {
                    let row = &kk[r * d..(r + 1) * d];
                    acc[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<C64>();
                }
            }
            acc.into_iter().map(move |z| z * vol)
        })
        .collect();
    SampledFunction::from_values(grid, Domain::Physical, f.fiber(), values)
}

fn check_kernel(kernel: &SampledFunction) -> Result<usize> {
    match (kernel.domain(), kernel.fiber()) {
        (Domain::Physical, Fiber::Matrix(d)) => Ok(d),
        _ => Err(Error::DimensionMismatch(
            "kernel must be matrix-valued on the physical side".into(),
        )),
    }
}

/// Point masses `w(x_n) dx^N`.
fn point_masses(weight: &Weight, grid: &Grid) -> Vec<f64> {
    let vol = grid.cell_volume(Domain::Physical);
    (0..grid.len())
        .map(|n| {
            let x = grid.coords(Domain::Physical, n);
            weight.value(&x[..grid.dim()]) * vol
        })
        .collect()
}

fn discrete_norm(f: &SampledFunction, q: f64, weight: &Weight, masses: &[f64]) -> f64 {
    let grid = f.grid();
    if q.is_infinite() {
        return (0..grid.len())
            .map(|n| {
                let v = f.node_norm(n);
                if v == 0.0 {
                    0.0
                } else {
                    let x = grid.coords(Domain::Physical, n);
                    v * weight.value(&x[..grid.dim()])
                }
            })
            .fold(0.0, f64::max);
    }
    let norms: Vec<f64> = (0..grid.len()).map(|n| f.node_norm(n)).collect();
    let peak = norms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    peak * norms
        .iter()
        .zip(masses)
        .map(|(v, w)| (v / peak).powf(q) * w)
        .sum::<f64>()
        .powf(1.0 / q)
}

/// `max_{|x| = 1} sum_n ||k_n x|| w_n` by multi-start fixed-point ascent.
///
/// The objective is convex, so `x <- g / |g|` with `g` a subgradient never
/// decreases it. Returns the value and the maximizer.
fn max_action(mats: &[Vec<C64>], masses: &[f64], d: usize) -> (f64, Vec<C64>) {
    let objective = |x: &[C64], buf: &mut [C64]| -> f64 {
        mats.iter()
            .zip(masses)
            .map(|(k, w)| {
                linalg::matvec(k, x, buf);
                linalg::vec_norm(buf) * w
            })
            .sum()
    };
    let mut starts: Vec<Vec<C64>> = (0..d)
        .map(|i| {
            let mut e = vec![ZERO; d];
            e[i] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    if d > 1 {
        // Top eigenvector of sum_n w_n k_n^* k_n.
        let mut gram = vec![ZERO; d * d];
        let mut adj = vec![ZERO; d * d];
        let mut prod = vec![ZERO; d * d];
        for (k, &w) in mats.iter().zip(masses) {
            linalg::adjoint(k, d, &mut adj);
            linalg::matmul(&adj, k, d, &mut prod);
            gram.iter_mut().zip(&prod).for_each(|(g, p)| *g += p * w);
        }
        starts.push(top_right_singular(&gram, d).1);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..8 {
            let mut v: Vec<C64> = (0..d)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let n = linalg::vec_norm(&v);
            v.iter_mut().for_each(|z| *z /= n);
            starts.push(v);
        }
    }
    let mut best = (f64::NEG_INFINITY, starts[0].clone());
    let mut buf = vec![ZERO; d];
    let mut adj = vec![ZERO; d * d];
    let mut tmp = vec![ZERO; d];
    for mut x in starts {
        let mut val = objective(&x, &mut buf);
        for _ in 0..500 {
            let mut g = vec![ZERO; d];
            for (k, &w) in mats.iter().zip(masses) {
                linalg::matvec(k, &x, &mut buf);
                let nrm = linalg::vec_norm(&buf);
                if nrm == 0.0 {
                    continue;
                }
                linalg::adjoint(k, d, &mut adj);
                linalg::matvec(&adj, &buf, &mut tmp);
                g.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b * (w / nrm));
            }
            let gn = linalg::vec_norm(&g);
            if gn == 0.0 {
                break;
            }
            let next: Vec<C64> = g.iter().map(|z| z / gn).collect();
            let nv = objective(&next, &mut buf);
            if nv <= val * (1.0 + 1e-15) {
                if nv > val {
                    val = nv;
                    x = next;
                }
                break;
            }
            val = nv;
            x = next;
        }
        if val > best.0 {
            best = (val, x);
        }
    }
    best
}

/// Largest singular value of a `d x d` matrix and its right singular vector.
fn top_right_singular(m: &[C64], d: usize) -> (f64, Vec<C64>) {
    let svd = linalg::to_dmatrix(m, d).svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let (i, s) =
        svd.singular_values.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
        );
    (s, (0..d).map(|j| v_t[(i, j)].conj()).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRatio {
    pub probe: String,
    pub ratio: f64,
}

/// Result of [`check_convolution_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionReport {
    #[serde(with = "exponent")]
    pub q: f64,
    /// Sub-multiplicativity constant on wrapped differences.
    pub c1: f64,
    /// `max_{|x|=1} ||k(.) x||_{L_{1,w}}`.
    pub c2: f64,
    /// `max_{|y|=1} ||k(.)^* y||_{L_{1,w}}`.
    pub c3: f64,
    /// `C1 C2^{1/q} C3^{1-1/q}`: the interpolation of the `q = 1` bound
    /// `C1 C2` and the `q = inf` bound `C1 C3`.
    pub bound: f64,
    /// `C1 C2^{1-1/q} C3^{1/q}`, the exponents as usually displayed.
    pub bound_swapped: f64,
    /// Largest observed `||Kf|| / ||f||`; a lower bound on `||K||`.
    pub empirical: f64,
    /// `max_xi ||k^(xi)||` over the frequency grid.
    pub symbol_sup: f64,
    pub probes: Vec<ProbeRatio>,
    /// `empirical <= bound (1 + 1e-6)` with every constant finite.
    pub pass: bool,
    pub diagnostic: Option<String>,
    pub flags: Vec<Flag>,
}

/// Relative slack allowed between the empirical norm and the bound.
pub const CONVOLUTION_TOLERANCE: f64 = 1e-6;

/// [`check_convolution_bounds`] for a single exponent.
pub fn check_convolution_bound(
    kernel: &SampledFunction,
    weight: &Weight,
    q: f64,
    members: &[SampledFunction],
) -> Result<ConvolutionReport> {
    Ok(check_convolution_bounds(kernel, weight, &[q], members)?.remove(0))
}

/// Estimate `C1`, `C2`, `C3` and the empirical operator norm on
/// `L_{q,w}` for each `q`, probing with a point mass along the `C2`
/// maximizer, a constant and a plane wave along the top singular directions
/// of `k^`, and the supplied members.
pub fn check_convolution_bounds(
    kernel: &SampledFunction,
    weight: &Weight,
    qs: &[f64],
    members: &[SampledFunction],
) -> Result<Vec<ConvolutionReport>> {
    let d = check_kernel(kernel)?;
    let grid = *kernel.grid();
    weight.validate(grid.dim())?;
    for &q in qs {
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "exponent q = {q} must lie in [1, inf]"
            )));
        }
    }
    let masses = point_masses(weight, &grid);
    let c1 = check_submultiplicative(weight, &grid, None, Differences::Periodic).c_hat;
    let mats: Vec<Vec<C64>> = kernel.nodes().map(|k| k.to_vec()).collect();
    let adjs: Vec<Vec<C64>> = mats
        .iter()
        .map(|k| {
            let mut a = vec![ZERO; d * d];
            linalg::adjoint(k, d, &mut a);
            a
        })
        .collect();
    let (c2, x2) = max_action(&mats, &masses, d);
    let (c3, _) = max_action(&adjs, &masses, d);

    let hat = forward_ft(kernel)?;
    let (arg, symbol_sup) = (0..grid.len())
        .map(|n| (n, linalg::op_norm(hat.node(n), d)))
        .fold((0, 0.0), |acc, (n, v)| if v > acc.1 { (n, v) } else { acc });

    let mut probes: Vec<(String, SampledFunction)> = Vec::new();
    let origin = grid.flat_index([
        grid.origin_axis_index(),
        if grid.dim() == 2 { grid.origin_axis_index() } else { 0 },
    ]);
    let mut delta = SampledFunction::zeros(grid, Domain::Physical, Fiber::Vector(d));
    delta.values_mut()[origin * d..(origin + 1) * d].copy_from_slice(&x2);
    probes.push(("delta".into(), delta));
    let zero_freq = 0;
    let (_, v0) = top_right_singular(hat.node(zero_freq), d);
    probes.push((
        "constant".into(),
        SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(d), |_, out| {
            out.copy_from_slice(&v0)
        })?,
    ));
    let (_, vw) = top_right_singular(hat.node(arg), d);
    let xi = grid.coords(Domain::Frequency, arg);
    probes.push((
        "plane-wave".into(),
        SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(d), |x, out| {
            let phase: f64 = x.iter().zip(&xi).map(|(a, b)| a * b).sum();
            let e = C64::from_polar(1.0, phase);
            out.iter_mut().zip(&vw).for_each(|(o, v)| *o = v * e);
        })?,
    ));
    for (i, f) in members.iter().enumerate() {
        if f.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        probes.push((format!("member-{i}"), f.clone()));
    }
    let outputs: Vec<SampledFunction> = probes.iter().map(|(_, f)| convolve(kernel, f)).collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(qs.len());
    for &q in qs {
        let inv = if q.is_infinite() { 0.0 } else { 1.0 / q };
        let bound = c1 * c2.powf(inv) * c3.powf(1.0 - inv);
        let bound_swapped = c1 * c2.powf(1.0 - inv) * c3.powf(inv);
        let mut ratios = Vec::new();
        for ((name, f), kf) in probes.iter().zip(&outputs) {
            let src = discrete_norm(f, q, weight, &masses);
            if src > 0.0 {
                ratios.push(ProbeRatio {
                    probe: name.clone(),
                    ratio: discrete_norm(kf, q, weight, &masses) / src,
                });
            }
        }
        let empirical = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let diagnostic = if !c1.is_finite() {
            Some("weight is not sub-multiplicative on the periodic grid".to_string())
        } else if !(c2.is_finite() && c3.is_finite()) {
            Some("kernel is not absolutely integrable against the weight on the grid".to_string())
        } else {
            None
        };
        let pass = diagnostic.is_none() && empirical <= bound * (1.0 + CONVOLUTION_TOLERANCE);
        reports.push(ConvolutionReport {
            q,
            c1,
            c2,
            c3,
            bound,
            bound_swapped,
            empirical,
            symbol_sup,
            probes: ratios,
            pass,
            diagnostic,
            flags: vec![Flag::LowerBound],
        });
    }
    Ok(reports)
}
