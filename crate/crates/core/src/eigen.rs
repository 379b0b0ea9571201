//! Dense Hermitian eigenvalues.
//!
//! Small and medium matrices go through a cyclic complex Jacobi iteration with the
//! relative off-diagonal test of Demmel and Veselić, which keeps tiny eigenvalues of
//! graded positive matrices accurate to a few ulps relative to themselves. Large
//! matrices fall back to nalgebra's tridiagonal QR.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{BslError, Result};

/// Dimension above which the QR fallback is used.
pub const JACOBI_MAX_DIM: usize = 320;
const MAX_SWEEPS: usize = 60;

pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues of a Hermitian matrix, sorted nonincreasing.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(BslError::InvalidParameter("matrix is not square".into()));
    }
    let mut vals = if is_diagonal(m) {
        (0..n).map(|i| m[(i, i)].re).collect()
    } else if n <= JACOBI_MAX_DIM {
        jacobi(m)?
    } else {
        nalgebra::linalg::SymmetricEigen::try_new(m.clone(), 1e-15, 10_000)
            .ok_or_else(|| BslError::NonConvergence("symmetric QR iteration cap reached".into()))?
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    vals.sort_by(|a: &f64, b: &f64| b.total_cmp(a));
    Ok(vals)
}

fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == Complex64::new(0.0, 0.0)))
}

fn jacobi(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    // column-major copy, a[i + n*j]
    let mut a: Vec<Complex64> = m.iter().copied().collect();
    let mut d: Vec<f64> = (0..n).map(|i| a[i + n * i].re).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p + n * q];
                let b = apq.norm();
                if b == 0.0 {
                    continue;
                }
                let scale = (d[p] * d[q]).abs().sqrt();
                if b <= f64::EPSILON * scale || (scale == 0.0 && b < f64::MIN_POSITIVE) {
                    continue;
                }
                rotated = true;
                let phase = apq / b;
                let tau = (d[q] - d[p]) / (2.0 * b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = [[c, s e^{iφ}], [-s e^{-iφ}, c]] acting on columns p, q
                let sp = phase * s;
                let spc = phase.conj() * s;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k + n * p];
                    let akq = a[k + n * q];
                    let nkp = akp * c - akq * spc;
                    let nkq = akp * sp + akq * c;
                    a[k + n * p] = nkp;
                    a[k + n * q] = nkq;
                    a[p + n * k] = nkp.conj();
                    a[q + n * k] = nkq.conj();
                }
                d[p] -= t * b;
                d[q] += t * b;
                a[p + n * p] = Complex64::new(d[p], 0.0);
                a[q + n * q] = Complex64::new(d[q], 0.0);
                a[p + n * q] = Complex64::new(0.0, 0.0);
                a[q + n * p] = Complex64::new(0.0, 0.0);
            }
        }
        if !rotated {
            return Ok(d);
        }
    }
    Err(BslError::NonConvergence(format!("Jacobi iteration exceeded {MAX_SWEEPS} sweeps")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn two_by_two() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0), c(1.0), c(1.0), c(2.0)]);
        let v = hermitian_eigenvalues(&m).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues 2 and 0
        let i = Complex64::new(0.0, 1.0);
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0), i, -i, c(1.0)]);
        let v = hermitian_eigenvalues(&m).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_sorted() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.1), c(3.0), c(0.5)]));
        assert_eq!(hermitian_eigenvalues(&m).unwrap(), vec![3.0, 0.5, 0.1]);
    }

    #[test]
    fn graded_matrix_keeps_relative_accuracy() {
        // D^{1/2} (I + E) D^{1/2} with D = diag(0.5^k): eigenvalues track 0.5^k relatively
        let n = 40;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let g = (0.5f64.powi(i as i32) * 0.5f64.powi(j as i32)).sqrt();
                let e = if i == j { 1.0 } else { 1e-3 / (1.0 + (i + j) as f64) };
                m[(i, j)] = c(g * e);
            }
        }
        let v = hermitian_eigenvalues(&m).unwrap();
        for (k, &l) in v.iter().enumerate() {
            let r = l / 0.5f64.powi(k as i32);
            assert!((r - 1.0).abs() < 1e-2, "k={k} ratio {r}");
        }
        assert!(v[n - 1] > 0.0);
    }
}
