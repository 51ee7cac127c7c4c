//! Small dense complex kernels used at every grid node.
//!
//! Matrices are row-major `d*d` slices. These avoid allocating an
//! `nalgebra` matrix per node in the inner loops of the norm and multiplier
//! routines; the heavier factorizations live in [`crate::opcalc`].

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Euclidean norm of a vector in C^d.
pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm (largest singular value) of a row-major `d x d` matrix.
pub fn op_norm(m: &[C64], d: usize) -> f64 {
    debug_assert_eq!(m.len(), d * d);
    match d {
        0 => 0.0,
        1 => m[0].norm(),
        2 => {
            let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
            let det = m[0] * m[3] - m[1] * m[2];
            let disc = (fro2 * fro2 - 4.0 * det.norm_sqr()).max(0.0);
            ((fro2 + disc.sqrt()) * 0.5).sqrt()
        }
        _ => {
            let mat = DMatrix::from_row_slice(d, d, m);
            mat.singular_values().max()
        }
    }
}

/// `out = m * v`.
pub fn matvec(m: &[C64], v: &[C64], out: &mut [C64]) {
    let d = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * d..(r + 1) * d];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out = a * b` for row-major square matrices.
pub fn matmul(a: &[C64], b: &[C64], d: usize, out: &mut [C64]) {
    for r in 0..d {
        for c in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += a[r * d + k] * b[k * d + c];
            }
            out[r * d + c] = acc;
        }
    }
}

/// Conjugate transpose.
pub fn adjoint(m: &[C64], d: usize, out: &mut [C64]) {
    for r in 0..d {
        for c in 0..d {
            out[c * d + r] = m[r * d + c].conj();
        }
    }
}

pub fn identity(d: usize) -> Vec<C64> {
    let mut m = vec![ZERO; d * d];
    for i in 0..d {
        m[i * d + i] = ONE;
    }
    m
}

/// Inverse of a small square matrix by Gauss-Jordan elimination with partial
/// pivoting. Returns `None` when a pivot falls below `1e-300` or the
/// reciprocal condition estimate is below machine precision.
pub fn inverse(m: &[C64], d: usize) -> Option<Vec<C64>> {
    if d == 1 {
        return if m[0].norm() > 1e-300 {
            Some(vec![m[0].inv()])
        } else {
            None
        };
    }
    if d == 2 {
        let det = m[0] * m[3] - m[1] * m[2];
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if det.norm() <= f64::EPSILON * scale * scale || det.norm() < 1e-300 {
            return None;
        }
        let inv_det = det.inv();
        return Some(vec![m[3] * inv_det, -m[1] * inv_det, -m[2] * inv_det, m[0] * inv_det]);
    }
    let mut a = m.to_vec();
    let mut inv = identity(d);
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i * d + col].norm().total_cmp(&a[j * d + col].norm()))
            .unwrap();
        if a[pivot * d + col].norm() <= f64::EPSILON * scale * 1e-2 || a[pivot * d + col].norm() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..d {
                a.swap(pivot * d + k, col * d + k);
                inv.swap(pivot * d + k, col * d + k);
            }
        }
        let p = a[col * d + col].inv();
        for k in 0..d {
            a[col * d + k] *= p;
            inv[col * d + k] *= p;
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = a[r * d + col];
            if factor == ZERO {
                continue;
            }
            for k in 0..d {
                let ack = a[col * d + k];
                let ick = inv[col * d + k];
                a[r * d + k] -= factor * ack;
                inv[r * d + k] -= factor * ick;
            }
        }
    }
    Some(inv)
}

/// Solve `m x = b` for a small system.
pub fn solve(m: &[C64], b: &[C64]) -> Option<Vec<C64>> {
    let d = b.len();
    let inv = inverse(m, d)?;
    let mut x = vec![ZERO; d];
    matvec(&inv, b, &mut x);
    Some(x)
}

pub fn to_dmatrix(m: &[C64], d: usize) -> DMatrix<C64> {
    DMatrix::from_row_slice(d, d, m)
}

pub fn from_dmatrix(m: &DMatrix<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut out = vec![ZERO; d * d];
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = m[(r, c)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn op_norm_matches_svd_for_2x2() {
        let m = [c(1.0, 2.0), c(-0.5, 0.0), c(0.3, -1.0), c(2.0, 0.5)];
        let svd = to_dmatrix(&m, 2).singular_values().max();
        assert!((op_norm(&m, 2) - svd).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_norm_is_one() {
        let m = [ZERO, ONE, ZERO, ZERO];
        assert!((op_norm(&m, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_3x3_round_trip() {
        let m = [
            c(4.0, 0.0),
            c(1.0, 1.0),
            c(0.0, 0.0),
            c(1.0, -1.0),
            c(3.0, 0.0),
            c(0.5, 0.0),
            c(0.0, 0.0),
            c(0.5, 0.0),
            c(2.0, 0.0),
        ];
        let inv = inverse(&m, 3).unwrap();
        let mut prod = vec![ZERO; 9];
        matmul(&m, &inv, 3, &mut prod);
        let id = identity(3);
        for (p, i) in prod.iter().zip(&id) {
            assert!((p - i).norm() < 1e-13);
        }
    }

    #[test]
    fn singular_is_rejected() {
        let m = [ONE, ONE, ONE, ONE];
        assert!(inverse(&m, 2).is_none());
    }
}
