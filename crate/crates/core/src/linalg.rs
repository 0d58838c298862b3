//! Thin helpers over `nalgebra` for the small dense systems used here.

use nalgebra::{DMatrix, DVector};

use crate::error::{AwlmError, Result};

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank: singular values above `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    singular_values(m).into_iter().filter(|&s| s > tol).count()
}

/// Inverse of a symmetric positive (semi)definite matrix.
///
/// When the smallest eigenvalue falls below `1e-12` a ridge of
/// `ridge_scale * trace / n` (or `ridge_scale` for a zero trace) is added to
/// the diagonal first. Returns the inverse and whether the ridge engaged.
pub fn spd_inverse(m: &DMatrix<f64>, ridge_scale: f64) -> Result<(DMatrix<f64>, bool)> {
    let (regularized, ridged) = regularize(m, ridge_scale);
    let inv = regularized
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| regularized.try_inverse())
        .ok_or_else(|| AwlmError::Singular("matrix is not invertible".into()))?;
    Ok((inv, ridged))
}

/// Adds the ridge described in [`spd_inverse`] when needed.
pub fn regularize(m: &DMatrix<f64>, ridge_scale: f64) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    let min_eig = m
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig >= 1e-12 {
        return (m.clone(), false);
    }
    let trace = m.trace();
    let ridge = if trace > 0.0 {
        ridge_scale * trace / n as f64
    } else {
        ridge_scale
    };
    // Lift the spectrum so the smallest eigenvalue is at least `ridge`.
    let shift = ridge + (-min_eig).max(0.0);
    (m + DMatrix::identity(n, n) * shift, true)
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| AwlmError::Singular("linear system is singular".into()))
}
