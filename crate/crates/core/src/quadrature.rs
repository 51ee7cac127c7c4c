//! Gauss-Legendre rules and the geometrically graded panel sequences used for
//! integrands that may be singular at the origin.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached 16-point rule.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Append the rule for `[a, b]` to `out` as `(node, weight)` pairs.
pub fn push_panel(a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let (x, w) = gl16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (xi, wi) in x.iter().zip(w) {
        out.push((mid + half * xi, half * wi));
    }
}

/// `\int_a^b f` by composite 16-point Gauss-Legendre on `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let mut rule = Vec::with_capacity(16 * panels);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        push_panel(a + p as f64 * h, a + (p + 1) as f64 * h, &mut rule);
    }
    rule.iter().map(|&(x, w)| w * f(x)).sum()
}

/// One-dimensional rule for `[a, b]` that is graded geometrically toward the
/// origin to depth `level` when the origin lies in `[a, b]`.
///
/// The innermost cells `|x| < scale * 2^{-level}` are omitted; as `level`
/// grows the rule converges to the full integral for integrable
/// singularities and diverges otherwise.
pub fn graded_rule(a: f64, b: f64, level: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut push_side = |lo: f64, hi: f64, toward_origin_at_lo: bool| {
        // [lo, hi] with one endpoint at the origin.
        let len = hi - lo;
        if len <= 0.0 {
            return;
        }
        for j in 0..level {
            let outer = len * 0.5f64.powi(j as i32);
            let inner = len * 0.5f64.powi(j as i32 + 1);
            if toward_origin_at_lo {
                push_panel(lo + inner, lo + outer, &mut out);
            } else {
                push_panel(hi - outer, hi - inner, &mut out);
            }
        }
    };
    if a < 0.0 && b > 0.0 {
        push_side(a, 0.0, false);
        push_side(0.0, b, true);
    } else if a == 0.0 {
        push_side(0.0, b, true);
    } else if b == 0.0 {
        push_side(a, 0.0, false);
    } else {
        let panels = 8;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            push_panel(a + p as f64 * h, a + (p + 1) as f64 * h, &mut out);
        }
    }
    out
}
