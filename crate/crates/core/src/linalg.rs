//! Small dense complex linear algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{FtlError, Result};

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in descending order.
///
/// Each eigenvector is normalized so its first entry of largest modulus is real and positive.
/// The flag is set when two eigenvalues agree to `1e-12` (relative), in which case the
/// eigenvectors inside that cluster are not unique.
pub fn hermitian_eigen_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>, bool) {
    let k = m.nrows();
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::from_element(k, k, C64::new(0.0, 0.0));
    for (col, &i) in idx.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let mut best = 0;
        for r in 0..k {
            if v[r].norm() > v[best].norm() + 1e-12 {
                best = r;
            }
        }
        let phase = if v[best].norm() > 0.0 { v[best].conj() / v[best].norm() } else { C64::new(1.0, 0.0) };
        for r in 0..k {
            vecs[(r, col)] = v[r] * phase;
        }
    }
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let degenerate = vals.windows(2).any(|w| (w[0] - w[1]).abs() <= 1e-12 * scale);
    (vals, vecs, degenerate)
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<C64>, b: &[C64]) -> Result<Vec<C64>> {
    let lu = a.clone().lu();
    let rhs = DVector::from_column_slice(b);
    lu.solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| FtlError::SingularFrame(a.determinant().norm()))
}

pub fn inverse(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    a.clone().try_inverse().ok_or_else(|| FtlError::SingularFrame(a.determinant().norm()))
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(1.0, 0.0)],
        );
        let (vals, vecs, deg) = hermitian_eigen_sorted(&m);
        assert!(!deg);
        assert!(vals[0] > vals[1]);
        for a in 0..2 {
            let v = vecs.column(a).into_owned();
            let mv = &m * &v;
            for r in 0..2 {
                assert!((mv[r] - v[r] * vals[a]).norm() < 1e-12);
            }
        }
    }
}
