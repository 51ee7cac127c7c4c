//! Sectorial matrix operators: resolvents, a sampled resolvent bound over the
//! sector, and principal-branch fractional powers.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ONE, ZERO};

/// Eigenvector condition number above which a matrix is treated as
/// non-diagonalizable.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e6;

/// Row-major matrix as written in configs: `[[[re, im], ...], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixSpec(pub Vec<Vec<[f64; 2]>>);

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        let d = self.0.len();
        if d == 0 || self.0.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch("matrix must be square and non-empty".into()));
        }
        let flat: Vec<C64> = self.0.iter().flatten().map(|[re, im]| C64::new(*re, *im)).collect();
        if flat.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(DMatrix::from_row_slice(d, d, &flat))
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        MatrixSpec(
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
                .collect(),
        )
    }
}

/// Complex diagonal matrix from real entries.
pub fn diag(entries: &[f64]) -> DMatrix<C64> {
    let d = entries.len();
    let mut m = DMatrix::from_element(d, d, ZERO);
    for (i, e) in entries.iter().enumerate() {
        m[(i, i)] = C64::new(*e, 0.0);
    }
    m
}

pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    linalg::op_norm(&linalg::from_dmatrix(m), m.nrows())
}

#[derive(Debug, Clone)]
struct Spectral {
    eigenvalues: Vec<C64>,
    /// Columns are unit eigenvectors; `None` when not safely diagonalizable.
    vectors: Option<(DMatrix<C64>, DMatrix<C64>)>,
    condition: f64,
}

fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn decompose(a: &DMatrix<C64>) -> Result<Spectral> {
    let d = a.nrows();
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Singular("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let eigenvalues: Vec<C64> = (0..d).map(|i| t[(i, i)]).collect();
    let scale = spectral_norm(a).max(f64::MIN_POSITIVE);

    // Eigenvectors of the triangular factor by back-substitution.
    let mut w = DMatrix::from_element(d, d, ZERO);
    for j in 0..d {
        w[(j, j)] = ONE;
        for i in (0..j).rev() {
            let mut acc = ZERO;
            for k in i + 1..=j {
                acc += t[(i, k)] * w[(k, j)];
            }
            let den = t[(i, i)] - t[(j, j)];
            let tiny = 1e-13 * scale;
            w[(i, j)] = if den.norm() > tiny {
                -acc / den
            } else if acc.norm() <= tiny {
                ZERO
            } else {
                // Defective block: a huge entry drives the condition past the limit.
                -acc / C64::new(tiny, 0.0)
            };
        }
        let n = (0..d).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..d {
            w[(i, j)] /= n;
        }
    }
    let v = &q * &w;
    let condition = condition_number(&v);
    let vectors = if condition.is_finite() && condition <= MAX_EIGENVECTOR_CONDITION {
        v.clone().try_inverse().map(|vi| (v, vi))
    } else {
        None
    };
    Ok(Spectral {
        eigenvalues,
        vectors,
        condition,
    })
}

/// A `d x d` matrix with a sector angle and an optional declared resolvent
/// constant.
#[derive(Debug, Clone)]
pub struct PositiveOperator {
    matrix: DMatrix<C64>,
    phi: f64,
    declared_m: Option<f64>,
    spectral: Spectral,
}

impl PositiveOperator {
    pub fn new(matrix: DMatrix<C64>, phi: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch("operator matrix must be square".into()));
        }
        if matrix.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("non-finite operator entry".into()));
        }
        if !(0.0..PI).contains(&phi) {
            return Err(Error::InvalidParameter(format!("sector angle {phi} not in [0, pi)")));
        }
        let spectral = decompose(&matrix)?;
        Ok(PositiveOperator {
            matrix,
            phi,
            declared_m: None,
            spectral,
        })
    }

    pub fn identity(d: usize) -> Self {
        PositiveOperator::new(DMatrix::identity(d, d), 0.0).expect("identity is sectorial")
    }

    pub fn with_declared_m(mut self, m: f64) -> Self {
        self.declared_m = Some(m);
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Row-major copy for the per-node kernels in [`crate::linalg`].
    pub fn row_major(&self) -> Vec<C64> {
        linalg::from_dmatrix(&self.matrix)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn declared_m(&self) -> Option<f64> {
        self.declared_m
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.spectral.eigenvalues
    }

    pub fn eigenvector_condition(&self) -> f64 {
        self.spectral.condition
    }

    /// `V diag(f(lambda)) V^{-1}`.
    fn spectral_map<F: Fn(C64) -> C64>(&self, f: F) -> Result<DMatrix<C64>> {
        let (v, vi) = self.spectral.vectors.as_ref().ok_or(Error::NotDiagonalizable {
            condition: self.spectral.condition,
        })?;
        let d = self.dim();
        let mut scaled = v.clone();
        for j in 0..d {
            let fj = f(self.spectral.eigenvalues[j]);
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        Ok(scaled * vi)
    }

    /// Relative error of `V Lambda V^{-1}` against `A`.
    pub fn reconstruction_error(&self) -> Result<f64> {
        let rebuilt = self.spectral_map(|z| z)?;
        Ok(spectral_norm(&(rebuilt - &self.matrix)) / spectral_norm(&self.matrix).max(f64::MIN_POSITIVE))
    }
}

/// `(A + lambda)^{-1}` by LU with one step of refinement; rejected when the
/// residual `||(A + lambda) X - I||` stays above `1e-10`.
pub fn resolvent(a: &DMatrix<C64>, lambda: C64) -> Result<DMatrix<C64>> {
    let d = a.nrows();
    let mut shifted = a.clone();
    for i in 0..d {
        shifted[(i, i)] += lambda;
    }
    let lu = shifted.clone().lu();
    let id = DMatrix::<C64>::identity(d, d);
    let mut x = lu
        .solve(&id)
        .ok_or_else(|| Error::Singular(format!("A + {lambda} is singular")))?;
    let r = &id - &shifted * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let residual = spectral_norm(&(&shifted * &x - &id));
    if !residual.is_finite() || residual > 1e-10 {
        return Err(Error::Singular(format!("A + {lambda} residual {residual:.3e}")));
    }
    Ok(x)
}

impl PositiveOperator {
    pub fn resolvent(&self, lambda: C64) -> Result<DMatrix<C64>> {
        resolvent(&self.matrix, lambda)
    }
}

/// Where the resolvent bound is sampled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Points per decade of `|lambda|`.
    pub per_decade: usize,
    pub min_modulus: f64,
    pub max_modulus: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            per_decade: 16,
            min_modulus: 1e-6,
            max_modulus: 1e6,
        }
    }
}

impl SamplePlan {
    pub fn doubled(&self) -> Self {
        SamplePlan {
            per_decade: 2 * self.per_decade,
            ..*self
        }
    }

    /// `lambda = 0`, then the rays `arg = +-phi` and the positive axis.
    pub fn points(&self, phi: f64) -> Vec<C64> {
        let lo = self.min_modulus.log10();
        let hi = self.max_modulus.log10();
        let n = ((hi - lo) * self.per_decade as f64).ceil().max(1.0) as usize;
        let mut angles = vec![0.0];
        if phi > 0.0 {
            angles.push(phi);
            angles.push(-phi);
        }
        let mut out = vec![ZERO];
        for &a in &angles {
            for i in 0..=n {
                let r = 10f64.powf(lo + (hi - lo) * i as f64 / n as f64);
                out.push(C64::from_polar(r, a));
            }
        }
        out
    }
}

/// Result of [`verify_phi_positive`].
#[derive(Debug, Clone, Serialize)]
pub struct SectorReport {
    /// `max ||(A + lambda)^{-1}|| (1 + |lambda|)` over the plan.
    pub m_hat: f64,
    /// Same maximum at doubled sampling density.
    pub m_hat_dense: f64,
    pub relative_change: f64,
    pub pass: bool,
    /// An eigenvalue of `-A` found inside the closed sector, as `[re, im]`.
    pub offending_eigenvalue: Option<[f64; 2]>,
    /// Declared constant, when one was given.
    pub declared_m: Option<f64>,
    /// `(|lambda|, arg lambda, ||R|| (1 + |lambda|))` at the base density.
    pub samples: Vec<[f64; 3]>,
}

fn in_sector(mu: C64, phi: f64, scale: f64) -> bool {
    mu.norm() <= 1e-12 * scale || mu.arg().abs() <= phi + 1e-12
}

fn sampled_bound(a: &DMatrix<C64>, phi: f64, plan: &SamplePlan) -> (f64, Vec<[f64; 3]>) {
    let mut best: f64 = 0.0;
    let mut samples = Vec::new();
    for lambda in plan.points(phi) {
        let value = match resolvent(a, lambda) {
            Ok(r) => spectral_norm(&r) * (1.0 + lambda.norm()),
            Err(_) => f64::INFINITY,
        };
        best = best.max(value);
        samples.push([lambda.norm(), lambda.arg(), value]);
    }
    (best, samples)
}

/// Estimate the resolvent constant on the sector and decide whether `A` is
/// `phi`-positive on the sampled set.
pub fn verify_phi_positive(op: &PositiveOperator, plan: &SamplePlan) -> SectorReport {
    let scale = spectral_norm(&op.matrix).max(1.0);
    let offending = op
        .eigenvalues()
        .iter()
        .map(|z| -z)
        .find(|mu| in_sector(*mu, op.phi, scale))
        .map(|mu| [mu.re, mu.im]);
    let (m_hat, samples) = sampled_bound(&op.matrix, op.phi, plan);
    let (m_hat_dense, _) = sampled_bound(&op.matrix, op.phi, &plan.doubled());
    let relative_change = if m_hat.is_finite() && m_hat_dense.is_finite() {
        (m_hat_dense - m_hat).abs() / m_hat
    } else {
        f64::INFINITY
    };
    let mut pass = offending.is_none() && m_hat.is_finite() && relative_change < 0.01;
    if let Some(declared) = op.declared_m {
        pass &= m_hat_dense <= declared * (1.0 + 1e-12);
    }
    SectorReport {
        m_hat,
        m_hat_dense,
        relative_change,
        pass,
        offending_eigenvalue: offending,
        declared_m: op.declared_m,
        samples,
    }
}

/// Principal-branch `A^theta` via the eigendecomposition.
pub fn fractional_power(op: &PositiveOperator, theta: f64) -> Result<DMatrix<C64>> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("exponent {theta}")));
    }
    let scale = spectral_norm(&op.matrix).max(f64::MIN_POSITIVE);
    if let Some(z) = op
        .eigenvalues()
        .iter()
        .find(|z| z.re <= 0.0 && z.im.abs() <= 1e-14 * scale || z.norm() <= 1e-14 * scale)
    {
        return Err(Error::SectorViolation(format!(
            "eigenvalue {z} on the branch cut (-inf, 0]"
        )));
    }
    if op.spectral.vectors.is_none() {
        return Err(Error::NotDiagonalizable {
            condition: op.spectral.condition,
        });
    }
    if theta == 0.0 {
        return Ok(DMatrix::identity(op.dim(), op.dim()));
    }
    if theta == 1.0 {
        return Ok(op.matrix.clone());
    }
    op.spectral_map(|z| (theta * z.ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_has_unit_constant() {
        let r = verify_phi_positive(&PositiveOperator::identity(2), &SamplePlan::default());
        assert!((r.m_hat - 1.0).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn diagonal_matches_eigenvalue_oracle() {
        let op = PositiveOperator::new(diag(&[1.0, 100.0]), PI / 2.0).unwrap();
        let plan = SamplePlan::default();
        let r = verify_phi_positive(&op, &plan);
        assert!(r.pass, "{r:?}");
        let oracle = plan
            .points(PI / 2.0)
            .iter()
            .map(|l| {
                [1.0, 100.0]
                    .iter()
                    .map(|a| (1.0 + l.norm()) / (c(*a, 0.0) + l).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        assert!((r.m_hat - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn nilpotent_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let op = PositiveOperator::new(m, 0.0).unwrap();
        let r = verify_phi_positive(&op, &SamplePlan::default());
        assert!(!r.pass);
        assert!(r.offending_eigenvalue.is_some());
    }

    #[test]
    fn resolvent_examples() {
        let r = resolvent(&DMatrix::identity(2, 2), ONE).unwrap();
        assert!((r[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        let r = resolvent(&diag(&[1.0, 4.0]), c(0.0, 1.0)).unwrap();
        assert!((r[(0, 0)] - c(1.0, 1.0).inv()).norm() < 1e-15);
        assert!((r[(1, 1)] - c(4.0, 1.0).inv()).norm() < 1e-15);
        assert!(resolvent(&diag(&[1.0, 4.0]), c(-4.0, 0.0)).is_err());
    }

    #[test]
    fn square_root_of_diagonal() {
        let op = PositiveOperator::new(diag(&[1.0, 4.0]), 0.0).unwrap();
        let s = fractional_power(&op, 0.5).unwrap();
        assert!((s - diag(&[1.0, 2.0])).norm() < 1e-14);
        let id = fractional_power(&op, 0.0).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
    }

    #[test]
    fn defective_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        let op = PositiveOperator::new(m, 0.0).unwrap();
        assert!(matches!(
            fractional_power(&op, 0.5),
            Err(Error::NotDiagonalizable { .. })
        ));
    }

    #[test]
    fn branch_cut_rejected() {
        let op = PositiveOperator::new(diag(&[-1.0, 2.0]), 0.0).unwrap();
        assert!(matches!(fractional_power(&op, 0.5), Err(Error::SectorViolation(_))));
    }

    #[test]
    fn non_normal_reconstruction() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(3.0, 0.0), ZERO, c(2.0, 0.5)]);
        let op = PositiveOperator::new(m, 0.0).unwrap();
        assert!(op.reconstruction_error().unwrap() < 1e-12);
        let half = fractional_power(&op, 0.5).unwrap();
        let sq = &half * &half;
        assert!((sq - op.matrix()).norm() < 1e-12);
    }

    #[test]
    fn matrix_spec_round_trip() {
        let spec: MatrixSpec = serde_json::from_str("[[[1,0],[0,1]],[[0,-1],[4,0]]]").unwrap();
        let m = spec.to_matrix().unwrap();
        assert_eq!(m[(0, 1)], c(0.0, 1.0));
        assert_eq!(MatrixSpec::from_matrix(&m), spec);
        assert!(MatrixSpec(vec![vec![[1.0, 0.0]], vec![]]).to_matrix().is_err());
    }
}
