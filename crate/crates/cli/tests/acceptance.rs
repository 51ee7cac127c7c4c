//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs with `harness = false` so the verdict lines are always printed.
//! Tolerances are the fixed thresholds of the criteria; oracles are computed
//! here, independently of the library code paths they check.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use besov_core::doe::{
    coercivity_study, contraction_sweep, interpolation_study, solve_degenerate, solve_full, solve_principal,
    CoefficientSpec, HGrid, InterpolationSetup, ProblemSpec, SolverSettings, SourceSpec,
};
use besov_core::ensemble::EnsembleSpec;
use besov_core::grid::{forward_ft, inverse_ft};
use besov_core::multiplier::{
    apply_multiplier, check_convolution_bounds, check_mikhlin, refinement_study, Refinement, SymbolSpec,
};
use besov_core::opcalc::MatrixSpec;
use besov_core::partition::{all_blocks, build_dyadic_system, verify_partition};
use besov_core::spaces::{besov_norm, BesovParams};
use besov_core::{Domain, Fiber, Grid, SampledFunction, Weight, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_l2(a: &SampledFunction, b: &SampledFunction) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.values().iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn diag(entries: &[f64]) -> MatrixSpec {
    let d = entries.len();
    MatrixSpec(
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| if i == j { [entries[i], 0.0] } else { [0.0, 0.0] })
                    .collect()
            })
            .collect(),
    )
}

// Independent copy of the partition generator for the brute-force oracle.
fn chi(s: f64) -> f64 {
    if s <= 0.5 || s >= 2.0 {
        0.0
    } else {
        (-1.0 / ((s - 0.5) * (2.0 - s))).exp()
    }
}

fn psi(s: f64) -> f64 {
    let c = chi(s);
    if c == 0.0 {
        0.0
    } else {
        c / (c + chi(0.5 * s) + chi(2.0 * s))
    }
}

fn phi(k: usize, r: f64, k_max: usize) -> f64 {
    let r = r.abs();
    let scale = 2f64.powi(k as i32);
    if k == k_max && r >= scale {
        return 1.0;
    }
    if k == 0 {
        return if r <= 1.0 { 1.0 } else { psi(r) };
    }
    psi(r / scale)
}

/// Continuous-convention transform by direct summation:
/// `f^(xi_m) = dx sum_j f(x_j) exp(-i x_j xi_m)`.
fn direct_ft(f: &SampledFunction, comps: usize) -> Vec<C64> {
    let g = f.grid();
    let m = g.points_per_axis();
    let twiddle: Vec<C64> = (0..m)
        .map(|t| C64::from_polar(1.0, -2.0 * PI * t as f64 / m as f64))
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); m * comps];
    for (mi, o) in out.chunks_mut(comps).enumerate() {
        let ms = if mi < m / 2 { mi as i64 } else { mi as i64 - m as i64 };
        // x_j xi_m = -pi m_s + 2 pi j m_s / M.
        let sign = if ms.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let step = ms.rem_euclid(m as i64) as usize;
        for j in 0..m {
            let w = twiddle[(j * step) % m] * (sign * g.dx());
            for (c, oc) in o.iter_mut().enumerate() {
                *oc += f.values()[j * comps + c] * w;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let grid = Grid::default_1d();
    let sys = build_dyadic_system(&grid).map_err(|e| e.to_string())?;
    let rep = verify_partition(&sys);
    let members = EnsembleSpec {
        fiber_dim: 2,
        max_frequency: 40.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for f in &members {
        let blocks = all_blocks(f, &sys).map_err(|e| e.to_string())?;
        let mut sum = SampledFunction::zeros(grid, Domain::Physical, f.fiber());
        for b in &blocks {
            sum = sum.add(b).map_err(|e| e.to_string())?;
        }
        worst = worst.max(rel_l2(&sum, f));
    }
    check(
        rep.sum_residual <= 1e-12 && worst <= 1e-10 && members.len() == 50,
        format!(
            "max|sum phi_k - 1| = {:.1e} (<= 1e-12), block reconstruction {:.1e} (<= 1e-10) over {} members",
            rep.sum_residual,
            worst,
            members.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let grid = Grid::default_1d();
    let members = EnsembleSpec {
        size: 20,
        fiber_dim: 2,
        max_frequency: 40.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let (mut round, mut planch): (f64, f64) = (0.0, 0.0);
    for f in &members {
        let hat = forward_ft(f).map_err(|e| e.to_string())?;
        let back = inverse_ft(&hat).map_err(|e| e.to_string())?;
        round = round.max(rel_l2(&back, f));
        let lhs = f.l2_norm().powi(2);
        let rhs = hat.l2_norm().powi(2) / (2.0 * PI);
        planch = planch.max((lhs - rhs).abs() / lhs);
    }

    // Shifted, modulated Gaussian against composite Simpson quadrature.
    let (c, w0) = (0.7, 3.0);
    let f = |x: f64| C64::from_polar((-(x - c) * (x - c) / 2.0).exp(), w0 * x);
    let g = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(1), |x, out| out[0] = f(x[0]))
        .map_err(|e| e.to_string())?;
    let hat = forward_ft(&g).map_err(|e| e.to_string())?;
    let (a, b, n) = (-30.0, 30.0, 12_000usize);
    let h = (b - a) / n as f64;
    let simpson = |xi: f64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n {
            let x = a + i as f64 * h;
            let wt = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += f(x) * C64::from_polar(wt, -x * xi);
        }
        acc * (h / 3.0)
    };
    let peak = (2.0 * PI).sqrt();
    let mut quad: f64 = 0.0;
    for n_idx in 0..grid.len() {
        let xi = grid.coords(Domain::Frequency, n_idx)[0];
        if (xi - w0).abs() <= 12.0 && n_idx % 2 == 0 {
            quad = quad.max((hat.values()[n_idx] - simpson(xi)).norm() / peak);
        }
    }
    check(
        round <= 1e-10 && quad <= 1e-8 && planch <= 1e-8,
        format!("round trip {round:.1e} (<= 1e-10), Gaussian vs quadrature {quad:.1e} (<= 1e-8), Plancherel {planch:.1e} (<= 1e-8)"),
    )
}

fn criterion_3() -> Outcome {
    let grid = Grid::default_1d();
    let sys = build_dyadic_system(&grid).map_err(|e| e.to_string())?;
    let k_max = sys.k_max();
    let members = EnsembleSpec {
        size: 10,
        seed: 31,
        fiber_dim: 2,
        max_frequency: 30.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let weights = [Weight::unit(), Weight::ShiftedPower { k: 0.5 }];
    let m = grid.points_per_axis();
    let mut worst: f64 = 0.0;
    for f in &members {
        let comps = f.fiber().components();
        let hat = direct_ft(f, comps);
        // Brute-force blocks: inverse sums restricted to supp phi_k.
        let blocks: Vec<Vec<f64>> = (0..=k_max)
            .map(|k| {
                let mut vals = vec![C64::new(0.0, 0.0); m * comps];
                for mi in 0..m {
                    let xi = grid.coords(Domain::Frequency, mi)[0];
                    let p = phi(k, xi, k_max);
                    if p == 0.0 {
                        continue;
                    }
                    for j in 0..m {
                        let e = C64::from_polar(p * grid.dxi() / (2.0 * PI), grid.x_axis(j) * xi);
                        for c in 0..comps {
                            vals[j * comps + c] += hat[mi * comps + c] * e;
                        }
                    }
                }
                vals.chunks(comps)
                    .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
                    .collect()
            })
            .collect();
        for weight in &weights {
            let wx: Vec<f64> = (0..m)
                .map(|j| {
                    let x = grid.x_axis(j).abs();
                    match weight {
                        Weight::ShiftedPower { k } => (1.0 + x).powf(*k),
                        _ => 1.0,
                    }
                })
                .collect();
            for s in [0.0, 1.0] {
                for q in [1.0, 2.0, f64::INFINITY] {
                    let terms: Vec<f64> = blocks
                        .iter()
                        .enumerate()
                        .map(|(k, b)| {
                            let lq = if q.is_infinite() {
                                b.iter().zip(&wx).map(|(v, w)| v * w).fold(0.0, f64::max)
                            } else {
                                b.iter()
                                    .zip(&wx)
                                    .map(|(v, w)| v.powf(q) * w * grid.dx())
                                    .sum::<f64>()
                                    .powf(1.0 / q)
                            };
                            2f64.powf(k as f64 * s) * lq
                        })
                        .collect();
                    for r in [1.0, 2.0, f64::INFINITY] {
                        let oracle = if r.is_infinite() {
                            terms.iter().copied().fold(0.0, f64::max)
                        } else {
                            terms.iter().map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r)
                        };
                        let params = BesovParams::new(s, q, r).with_weight(weight.clone());
                        let lib = besov_norm(f, &params, &sys).map_err(|e| e.to_string())?.value;
                        worst = worst.max((lib - oracle).abs() / oracle);
                    }
                }
            }
        }
    }
    check(
        worst <= 1e-6,
        format!(
            "max relative gap {worst:.1e} (<= 1e-6) over 18 (s,q,r) x 2 weights x {} members",
            members.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let grid = Grid::default_1d();
    let sys = build_dyadic_system(&grid).map_err(|e| e.to_string())?;
    let id = SymbolSpec::Identity { d: 2 }.build(&grid).map_err(|e| e.to_string())?;
    let members = EnsembleSpec {
        size: 20,
        fiber_dim: 2,
        max_frequency: 40.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let params = BesovParams::new(0.0, 2.0, 2.0);
    let mut dev: f64 = 0.0;
    for f in &members {
        let src = besov_norm(f, &params, &sys).map_err(|e| e.to_string())?.value;
        let out = besov_norm(&apply_multiplier(&id, f).map_err(|e| e.to_string())?, &params, &sys)
            .map_err(|e| e.to_string())?
            .value;
        dev = dev.max((out / src - 1.0).abs());
    }
    let coarse = Grid::new(1, 32.0, 1024).map_err(|e| e.to_string())?;
    let study = refinement_study(&SymbolSpec::Jump { d: 1 }, &coarse, 3, Refinement::Extend, |m, g| {
        check_mikhlin(m, 2.0, &Weight::unit(), None, g)
    })
    .map_err(|e| e.to_string())?;
    let first = &study.levels[0];
    let last = &study.levels[study.levels.len() - 1];
    let fails = !study.pass && study.total_growth > 10.0;
    check(
        dev <= 1e-10 && fails && first.points_per_axis == 1024 && last.points_per_axis == 8192,
        format!(
            "identity |ratio - 1| = {dev:.1e} (<= 1e-10); jump Mikhlin constant {:.3e} -> {:.3e} (M = 1024 -> 8192), growth {:.0}x (> 10x)",
            first.a_hat, last.a_hat, study.total_growth
        ),
    )
}

struct SuiteEntry {
    name: String,
    a: f64,
    ratio: f64,
}

fn mikhlin_suite(grid: &Grid, registry: &[SymbolSpec]) -> Result<(Vec<SuiteEntry>, Vec<String>), String> {
    let sys = build_dyadic_system(grid).map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    let params = [
        BesovParams::new(0.0, 2.0, 2.0),
        BesovParams::new(1.0, 2.0, 1.0),
        BesovParams::new(0.5, 2.0, f64::INFINITY),
    ];
    for spec in registry {
        let mk = |m: &besov_core::multiplier::Symbol, g: &Grid| check_mikhlin(m, 2.0, &Weight::unit(), None, g);
        let ext = refinement_study(spec, grid, 1, Refinement::Extend, mk).map_err(|e| e.to_string())?;
        let refi = refinement_study(spec, grid, 1, Refinement::Refine, mk).map_err(|e| e.to_string())?;
        if !(ext.pass && refi.pass) {
            rejected.push(spec.label());
            continue;
        }
        let a = ext.levels[0].a_hat;
        let sym = spec.build(grid).map_err(|e| e.to_string())?;
        let members = EnsembleSpec {
            size: 20,
            fiber_dim: spec.fiber_dim(),
            max_frequency: 20.0,
            ..Default::default()
        }
        .sample(grid)
        .map_err(|e| e.to_string())?;
        let mut ratio: f64 = 0.0;
        for f in &members {
            let tf = apply_multiplier(&sym, f).map_err(|e| e.to_string())?;
            for p in &params {
                let src = besov_norm(f, p, &sys).map_err(|e| e.to_string())?.value;
                let out = besov_norm(&tf, p, &sys).map_err(|e| e.to_string())?.value;
                ratio = ratio.max(out / src);
            }
        }
        entries.push(SuiteEntry {
            name: spec.label(),
            a,
            ratio,
        });
    }
    Ok((entries, rejected))
}

fn criterion_5() -> Outcome {
    let registry: Vec<SymbolSpec> = [
        "identity",
        "bessel",
        "riesz-like",
        "resolvent-sigma:1,1",
        "resolvent-sigma:1;4,10",
        "shift:0.5",
        "jump",
    ]
    .iter()
    .map(|s| s.parse().expect("registry name"))
    .collect();
    let grid = Grid::default_1d();
    let (base, rejected) = mikhlin_suite(&grid, &registry)?;
    let (fine, _) = mikhlin_suite(&grid.refined(), &registry)?;
    let kappa = |e: &[SuiteEntry]| e.iter().map(|s| s.ratio / s.a).fold(0.0, f64::max);
    let (k0, k1) = (kappa(&base), kappa(&fine));
    let drift = (k1 / k0 - 1.0).abs();
    let bounded = base.iter().all(|s| s.ratio <= k0 * s.a * (1.0 + 1e-12));
    let listing: Vec<String> = base
        .iter()
        .map(|s| format!("{} {:.3}/{:.3}", s.name, s.ratio, s.a))
        .collect();
    check(
        bounded && drift < 0.2 && base.len() >= 4 && base.len() == fine.len(),
        format!(
            "kappa = {k0:.4} (refined {k1:.4}, drift {:.1}% < 20%); ratio/A: [{}]; rejected: [{}]",
            100.0 * drift,
            listing.join(", "),
            rejected.join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let grid = Grid::new(1, 16.0, 1024).map_err(|e| e.to_string())?;
    let members = EnsembleSpec {
        size: 10,
        fiber_dim: 2,
        center_range: 3.0,
        max_frequency: 5.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let qs = [1.0, 2.0, f64::INFINITY];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c: f64 = rng.gen_range(-2.0..2.0);
        let sigma: f64 = rng.gen_range(0.3..1.5);
        let m: Vec<C64> = (0..4)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let kernel = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Matrix(2), |x, out| {
            let e = (-(x[0] - c).powi(2) / (2.0 * sigma * sigma)).exp();
            for (o, v) in out.iter_mut().zip(&m) {
                *o = v * e;
            }
        })
        .map_err(|e| e.to_string())?;
        for rep in check_convolution_bounds(&kernel, &Weight::unit(), &qs, &members).map_err(|e| e.to_string())? {
            worst = worst
                .max(rep.empirical / rep.bound)
                .max(rep.empirical / rep.bound_swapped);
        }
    }
    let scalar = SampledFunction::from_fn(grid, Domain::Physical, Fiber::Matrix(1), |x, out| {
        out[0] = C64::new((-x[0] * x[0]).exp(), 0.0)
    })
    .map_err(|e| e.to_string())?;
    let scalar_members = EnsembleSpec {
        size: 10,
        center_range: 3.0,
        max_frequency: 5.0,
        ..Default::default()
    }
    .sample(&grid)
    .map_err(|e| e.to_string())?;
    let mut gauss_gap: f64 = 0.0;
    for rep in check_convolution_bounds(&scalar, &Weight::unit(), &qs, &scalar_members).map_err(|e| e.to_string())? {
        gauss_gap = gauss_gap.max((rep.empirical - PI.sqrt()).abs() / PI.sqrt());
    }
    check(
        worst <= 1.0 + 1e-6 && gauss_gap <= 1e-6,
        format!("max empirical/bound {worst:.6} (<= 1 + 1e-6) over 20 kernels x q in {{1,2,inf}}; scalar Gaussian vs sqrt(pi) {gauss_gap:.1e} (<= 1e-6)"),
    )
}

/// Second-order finite differences for `-u'' + c u = f` with `u(+-L) = 0`,
/// solved by the Thomas algorithm.
fn fd_oracle(grid: &Grid, c: f64, f: &[f64]) -> Vec<f64> {
    let n = grid.points_per_axis();
    let h2 = grid.dx() * grid.dx();
    let (off, main) = (-1.0 / h2, 2.0 / h2 + c);
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = off / main;
    dp[0] = f[0] / main;
    for i in 1..n {
        let den = main - off * cp[i - 1];
        cp[i] = off / den;
        dp[i] = (f[i] - off * dp[i - 1]) / den;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = dp[i] - cp[i] * u[i + 1];
    }
    u
}

fn fd_gap(grid: &Grid) -> Result<f64, String> {
    let p = ProblemSpec::scalar(1.0, 1.0).build(grid).map_err(|e| e.to_string())?;
    let u = solve_principal(&p).map_err(|e| e.to_string())?.u;
    let f: Vec<f64> = p.f.values().iter().map(|z| z.re).collect();
    let fd = fd_oracle(grid, 2.0, &f);
    let num: f64 = u.values().iter().zip(&fd).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = fd.iter().map(|b| b * b).sum();
    Ok((num / den).sqrt())
}

fn criterion_7() -> Outcome {
    let grid = Grid::default_1d();
    let e0 = fd_gap(&grid)?;
    let e1 = fd_gap(&grid.refined())?;
    let order = e0 / e1;

    let settings = SolverSettings::default();
    let mut full = ProblemSpec::scalar(1.0, 1.0);
    full.a = diag(&[1.0, 4.0]);
    full.a1 = CoefficientSpec::Gaussian {
        amplitude: 0.1,
        width: 1.0,
        matrix: None,
    };
    full.f = SourceSpec::Manufactured {
        center: 0.3,
        width: 1.0,
        direction: None,
    };
    let p = full.build(&grid).map_err(|e| e.to_string())?;
    let exact = full
        .exact_solution(&grid)
        .map_err(|e| e.to_string())?
        .expect("manufactured");
    let err_full = rel_l2(&solve_full(&p, &settings).map_err(|e| e.to_string())?.u, &exact);

    let mut deg = ProblemSpec::scalar(1.0, 10.0);
    deg.gamma = Weight::Product {
        alphas: vec![vec![2.0]],
        betas: vec![1.0],
    };
    deg.a1 = full.a1.clone();
    deg.f = full.f.clone();
    let p = deg.build(&grid).map_err(|e| e.to_string())?;
    let exact = deg
        .exact_solution(&grid)
        .map_err(|e| e.to_string())?
        .expect("manufactured");
    let err_deg = rel_l2(&solve_degenerate(&p, &settings).map_err(|e| e.to_string())?.u, &exact);
    check(
        e0 <= 1e-4 && order > 3.0 && err_full <= 1e-5 && err_deg <= 1e-5,
        format!(
            "FD gap {e0:.2e} (<= 1e-4), refined {e1:.2e}, ratio {order:.2} (~4 for O(dx^2)); manufactured full {err_full:.1e}, degenerate (1+t^2) {err_deg:.1e} (<= 1e-5)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut spec = ProblemSpec::scalar(1.0, 1.0);
    spec.a = diag(&[1.0, 4.0]);
    let ensemble = EnsembleSpec {
        size: 50,
        fiber_dim: 2,
        max_frequency: 64.0,
        ..Default::default()
    };
    let lambdas = [1.0, 10.0, 100.0, 1000.0];
    let study = coercivity_study(
        &spec,
        &ensemble,
        &Grid::default_1d(),
        &lambdas,
        &SolverSettings::default(),
    )
    .map_err(|e| e.to_string())?;
    let c: Vec<String> = study.base.iter().map(|r| format!("{:.3}", r.c_hat)).collect();
    let finite = study.base.iter().chain(&study.refined).all(|r| r.c_hat.is_finite());
    check(
        study.pass && finite && study.drift < 0.02 && study.spread < 2.0,
        format!(
            "C^ over lambda {{1,10,100,1000}} = [{}], drift {:.1e} (< 2%), spread {:.3} (< 2)",
            c.join(", "),
            study.drift,
            study.spread
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut spec = ProblemSpec::scalar(1.0, 50.0);
    spec.a1 = CoefficientSpec::Gaussian {
        amplitude: 0.1,
        width: 1.0,
        matrix: None,
    };
    let ladder = [1.0, 5.0, 50.0, 500.0, 5000.0];
    let sweep = contraction_sweep(&spec, &Grid::default_1d(), &ladder, &SolverSettings::default())
        .map_err(|e| e.to_string())?;
    let at = ladder.iter().position(|&l| l == 50.0).expect("lambda 50 on the ladder");
    let q = sweep.q_hat[at];
    let iters = sweep.iterations[at];
    let q_list: Vec<String> = sweep.q_hat.iter().map(|v| format!("{v:.2e}")).collect();
    check(
        q < 1.0 && iters.is_some_and(|n| n <= 10) && sweep.monotone,
        format!(
            "q^(50) = {q:.3e} (< 1), iterations {iters:?} (<= 10); q^ along [1,5,50,500,5000] = [{}] nonincreasing: {}",
            q_list.join(", "),
            sweep.monotone
        ),
    )
}

fn criterion_10() -> Outcome {
    let grid = Grid::default_1d();
    let ensemble = EnsembleSpec {
        fiber_dim: 2,
        max_frequency: 4.0,
        ..Default::default()
    };
    let mut lines = Vec::new();
    let mut medians = Vec::new();
    let mut ok = true;
    for mu in [0.125, 0.25, 0.5] {
        let setup = InterpolationSetup {
            a: diag(&[1.0, 9.0]),
            phi: PI / 2.0,
            alpha: 1,
            l: 2,
            mu,
            h: HGrid::default(),
            besov: BesovParams::default(),
        };
        let s = interpolation_study(&ensemble, &grid, &setup).map_err(|e| e.to_string())?;
        ok &= s.pass && s.base.c_mu.is_finite();
        medians.push(s.base.h_star_median.unwrap_or(f64::NAN));
        lines.push(format!(
            "mu {mu}: C {:.3} drift h {:.2} grid {:.2} slope {:.3} h* {:.3}",
            s.base.c_mu,
            s.drift_h,
            s.drift_grid,
            s.base.slope.unwrap_or(f64::NAN),
            s.base.h_star_median.unwrap_or(f64::NAN)
        ));
    }
    // With the norm ratio fixed, h* = (mu^-1 - 1) base / lions falls with mu.
    let shifts = medians.windows(2).all(|w| w[1] < w[0]);
    check(
        ok && shifts,
        format!("{}; h* decreasing in mu: {shifts}", lines.join("; ")),
    )
}

fn strip_metadata(text: &str) -> Result<serde_json::Value, String> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("metadata");
    }
    Ok(v)
}

fn run_cli(config: &Path, out: &Path) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_besov"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    status.status.code().ok_or_else(|| "terminated by signal".to_string())
}

fn criterion_11() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatched = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let a = tmp.path().join(format!("{i}-a"));
        let b = tmp.path().join(format!("{i}-b"));
        let (ca, cb) = (run_cli(cfg, &a)?, run_cli(cfg, &b)?);
        let name = cfg.file_name().unwrap_or_default().to_string_lossy().to_string();
        let read = |d: &Path| std::fs::read_to_string(d.join("report.json")).map_err(|e| format!("{name}: {e}"));
        let (ra, rb) = (read(&a)?, read(&b)?);
        let same_report = strip_metadata(&ra)? == strip_metadata(&rb)?;
        let same_data = data_files(&a)? == data_files(&b)?;
        if !(same_report && same_data && ca == cb) {
            mismatched.push(name);
        }
    }
    check(
        mismatched.is_empty() && !configs.is_empty(),
        format!(
            "{} configs run twice; reports identical modulo metadata.timestamp; mismatched: [{}]",
            configs.len(),
            mismatched.join(", ")
        ),
    )
}

fn data_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap_or_default();
            (p.file_name().unwrap_or_default().to_string_lossy().to_string(), bytes)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("partition fidelity", criterion_1),
        ("transform fidelity", criterion_2),
        ("Besov-norm oracle equivalence", criterion_3),
        ("identity and jump multipliers", criterion_4),
        ("Mikhlin consistency suite", criterion_5),
        ("convolution bound", criterion_6),
        ("solver correctness", criterion_7),
        ("coercivity", criterion_8),
        ("contraction", criterion_9),
        ("interpolation inequality", criterion_10),
        ("CLI determinism", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
