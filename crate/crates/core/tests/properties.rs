//! Randomised invariants of the transforms, the partition of unity, the
//! norms, the weights, the operator calculus and the multipliers.

use std::f64::consts::{FRAC_PI_2, PI};

use besov_core::doe::degenerate_transform;
use besov_core::grid::{forward_ft, inverse_ft, spectral_derivative};
use besov_core::multiplier::{apply_multiplier, SymbolSpec};
use besov_core::opcalc::{fractional_power, spectral_norm, PositiveOperator};
use besov_core::partition::{all_blocks, build_dyadic_system, dyadic_block, psi};
use besov_core::spaces::{besov_norm, lp_norm, BesovParams};
use besov_core::weights::{check_integrability, check_weight_submultiplicative, Differences, IntegrandForm};
use besov_core::{Domain, Fiber, Grid, SampledFunction, Weight, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(1, 16.0, 512).unwrap()
}

/// Sum of modulated Gaussians, resolved on [`grid`] and negligible at the box edge.
fn packet(grid: Grid, terms: &[(f64, f64, f64, f64)]) -> SampledFunction {
    let terms = terms.to_vec();
    SampledFunction::from_fn(grid, Domain::Physical, Fiber::Vector(1), move |x, out| {
        out[0] = terms
            .iter()
            .map(|&(amp, center, width, freq)| {
                C64::from_polar(amp * (-((x[0] - center) / width).powi(2)).exp(), freq * x[0])
            })
            .sum();
    })
    .unwrap()
}

fn term() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-2.0..2.0f64, -3.0..3.0f64, 0.5..2.0f64, -6.0..6.0f64)
}

fn gap(a: &SampledFunction, b: &SampledFunction) -> f64 {
    a.sub(b).unwrap().max_norm() / a.max_norm().max(b.max_norm()).max(f64::MIN_POSITIVE)
}

fn l2(f: &SampledFunction) -> f64 {
    lp_norm(f, 2.0, &Weight::unit()).unwrap()
}

fn sectorial(d: usize) -> impl Strategy<Value = DMatrix<C64>> {
    (
        proptest::collection::vec(0.2..20.0f64, d),
        proptest::collection::vec(-0.3..0.3f64, d * d),
    )
        .prop_map(move |(eig, p)| {
            let p = DMatrix::from_fn(d, d, |i, j| {
                C64::new(if i == j { 1.0 } else { 0.0 } + p[i * d + j], 0.0)
            });
            let e = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    C64::new(eig[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            &p * e * p.clone().try_inverse().unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_is_linear(f in proptest::collection::vec(term(), 1..3), g in proptest::collection::vec(term(), 1..3),
                           a in -3.0..3.0f64, b in -3.0..3.0f64, ai in -3.0..3.0f64) {
        let (f, g) = (packet(grid(), &f), packet(grid(), &g));
        let (a, b) = (C64::new(a, ai), C64::new(b, 0.0));
        let lhs = forward_ft(&f.combine(a, &g, b).unwrap()).unwrap();
        let rhs = forward_ft(&f).unwrap().combine(a, &forward_ft(&g).unwrap(), b).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_norm() <= 1e-12 * (1.0 + lhs.max_norm()));
    }

    #[test]
    fn transform_round_trip_and_plancherel(f in proptest::collection::vec(term(), 1..4)) {
        let f = packet(grid(), &f);
        prop_assume!(f.max_norm() > 1e-3);
        let hat = forward_ft(&f).unwrap();
        prop_assert!(gap(&inverse_ft(&hat).unwrap(), &f) <= 1e-12);
        let (lhs, rhs) = (l2(&f), l2(&hat) / (2.0 * PI).sqrt());
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn spectral_derivatives_compose(f in proptest::collection::vec(term(), 1..3), a in 0usize..3, b in 0usize..3) {
        let f = packet(grid(), &f);
        let two_steps = spectral_derivative(&spectral_derivative(&f, &[a]).unwrap().value, &[b]).unwrap().value;
        let one_step = spectral_derivative(&f, &[a + b]).unwrap().value;
        prop_assert!(two_steps.sub(&one_step).unwrap().max_norm() <= 1e-8 * (1.0 + one_step.max_norm()));
    }

    #[test]
    fn psi_dilates_to_unity(s in 1e-3..1e3f64) {
        let total: f64 = (-40..=40).map(|k| psi(2f64.powi(-k) * s)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn blocks_reconstruct_and_are_almost_orthogonal(f in proptest::collection::vec(term(), 1..3)) {
        let f = packet(grid(), &f);
        let sys = build_dyadic_system(&grid()).unwrap();
        let blocks = all_blocks(&f, &sys).unwrap();
        let mut sum = SampledFunction::zeros(grid(), Domain::Physical, Fiber::Vector(1));
        for b in &blocks {
            sum = sum.add(b).unwrap();
        }
        prop_assert!(l2(&sum.sub(&f).unwrap()) <= 1e-10 * l2(&f));
        for (k, block) in blocks.iter().enumerate() {
            for m in 0..blocks.len() {
                if k.abs_diff(m) > 1 {
                    prop_assert!(dyadic_block(block, m, &sys).unwrap().max_norm() <= 1e-12 * (1.0 + f.max_norm()));
                }
            }
        }
        for (k, phi) in sys.phis().iter().enumerate() {
            let floor = if k == 0 { -1e-12 } else { 0.0 };
            prop_assert!(phi.iter().all(|&v| v >= floor));
        }
    }

    #[test]
    fn besov_norm_is_a_norm_and_decreases_in_r(
        f in proptest::collection::vec(term(), 1..3), g in proptest::collection::vec(term(), 1..3),
        s in -1.0..2.0f64, q in 1.0..4.0f64, r1 in 1.0..4.0f64, dr in 0.0..4.0f64, c in -5.0..5.0f64,
    ) {
        let (f, g) = (packet(grid(), &f), packet(grid(), &g));
        let sys = build_dyadic_system(&grid()).unwrap();
        let p = BesovParams::new(s, q, r1);
        let norm = |h: &SampledFunction, p: &BesovParams| besov_norm(h, p, &sys).unwrap().value;
        let (nf, ng) = (norm(&f, &p), norm(&g, &p));
        prop_assert!(norm(&f.add(&g).unwrap(), &p) <= nf + ng + 1e-10 * (1.0 + nf + ng));
        let scaled = norm(&f.scaled(C64::new(c, 0.0)), &p);
        prop_assert!((scaled - c.abs() * nf).abs() <= 1e-12 * (1.0 + c.abs() * nf));
        let coarser = norm(&f, &BesovParams::new(s, q, r1 + dr));
        prop_assert!(coarser <= nf * (1.0 + 1e-12));
        prop_assert!(norm(&f, &BesovParams::new(s, q, f64::INFINITY)) <= coarser * (1.0 + 1e-12));
    }

    #[test]
    fn registry_weights_meet_declared_constant(k in 0.0..4.0f64, c in 0.0..1.5f64, a in 0.0..3.0f64, beta in 0.0..2.0f64,
                                              half_width in 2.0..12.0f64, level in 5u32..8) {
        let grid = Grid::new(1, half_width, 1 << level).unwrap();
        let weights = [
            Weight::ShiftedPower { k },
            Weight::Exponential { c },
            Weight::Product { alphas: vec![vec![a]], betas: vec![beta] },
        ];
        for w in &weights {
            let report = check_weight_submultiplicative(w, &grid, None, Differences::Euclidean);
            prop_assert!(report.pass, "{w:?}: {} > {:?}", report.c_hat, report.declared);
        }
    }

    #[test]
    fn integrability_grows_with_the_box(alpha in -0.9..2.0f64, a in 0.1..3.0f64, b in 0.1..3.0f64, grow in 0.0..2.0f64) {
        let w = Weight::Power { alpha };
        let form = IntegrandForm::LocalSingle { p: 1.0 };
        let small = check_integrability(&w, &Weight::unit(), form, &[(-a, b)]).unwrap();
        let large = check_integrability(&w, &Weight::unit(), form, &[(-a - grow, b + grow)]).unwrap();
        prop_assert!(small.finite && large.finite);
        prop_assert!(large.value >= small.value * (1.0 - 1e-10));
    }

    #[test]
    fn resolvent_identity(m in sectorial(3), l in (0.0..50.0f64, -50.0..50.0f64), u in (0.0..50.0f64, -50.0..50.0f64)) {
        let op = PositiveOperator::new(m, FRAC_PI_2).unwrap();
        let (l, u) = (C64::new(l.0 + 0.1, l.1), C64::new(u.0 + 0.1, u.1));
        let (rl, ru) = (op.resolvent(l).unwrap(), op.resolvent(u).unwrap());
        let lhs = &rl - &ru;
        let rhs = (&rl * &ru) * (u - l);
        prop_assert!(spectral_norm(&(lhs - &rhs)) <= 1e-9 * (1.0 + spectral_norm(&rhs)));
    }

    #[test]
    fn fractional_powers_form_a_semigroup(m in sectorial(3), a in -1.0..1.5f64, b in -1.0..1.5f64) {
        let op = PositiveOperator::new(m, FRAC_PI_2).unwrap();
        let pa = fractional_power(&op, a).unwrap();
        let pb = fractional_power(&op, b).unwrap();
        let pab = fractional_power(&op, a + b).unwrap();
        prop_assert!(spectral_norm(&(&pa * &pb - &pab)) <= 1e-9 * op.eigenvector_condition() * (1.0 + spectral_norm(&pab)));
        let near = fractional_power(&op, a + 1e-6).unwrap();
        let log_cond = op.eigenvector_condition().ln().max(1.0);
        prop_assert!(spectral_norm(&(near - &pa)) <= 1e-4 * spectral_norm(&pa) * log_cond);
    }

    #[test]
    fn multipliers_compose_as_products(f in proptest::collection::vec(term(), 1..3), h in -2.0..2.0f64, pick in 0usize..3) {
        let grid = grid();
        let specs = [SymbolSpec::Bessel { d: 1 }, SymbolSpec::RieszLike { d: 1 }, SymbolSpec::Shift { h, d: 1 }];
        let m = specs[pick].build(&grid).unwrap();
        let n = specs[(pick + 1) % 3].build(&grid).unwrap();
        let f = packet(grid, &f);
        let composed = apply_multiplier(&m, &apply_multiplier(&n, &f).unwrap()).unwrap();
        let product = apply_multiplier(&m.product(&n).unwrap(), &f).unwrap();
        prop_assert!(composed.sub(&product).unwrap().max_norm() <= 1e-10 * (1.0 + f.max_norm()));
    }

    #[test]
    fn substitution_round_trips(c in 0.1..3.0f64, k in 0.5..3.0f64, t in -7.9..7.9f64) {
        let grid = Grid::new(1, 8.0, 256).unwrap();
        for gamma in [Weight::Product { alphas: vec![vec![2.0]], betas: vec![c] }, Weight::ShiftedPower { k }, Weight::Constant { value: c }] {
            let map = degenerate_transform(&gamma, &grid, 1e-6).unwrap();
            let back = map.inverse(map.tau(t)).unwrap();
            prop_assert!((back - t).abs() <= 1e-9 * t.abs().max(1.0), "{gamma:?}: {t} -> {back}");
        }
    }
}
