//! Small symmetric-matrix helpers: guarded inversion with condition reporting,
//! symmetric square roots, and spectra of PSD products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const CONDITION_LIMIT: f64 = 1e12;

/// Symmetrize (average with the transpose); guards drift from quadrature.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Eigen-decomposition based inverse of a symmetric matrix with a condition
/// check; errors above `CONDITION_LIMIT` instead of propagating junk.
pub fn sym_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sym = symmetrize(m);
    let n = sym.nrows();
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularMatrix { condition: cond });
    }
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        inv += v * v.transpose() / eig.eigenvalues[k];
    }
    Ok((inv, cond))
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Symmetric PSD square root (negative ripple clipped at zero).
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        let v = eig.eigenvectors.column(k);
        out += v * v.transpose() * lam;
    }
    out
}

/// Eigenvalues of `A * S` for symmetric PSD `A` and `S`: computed as the
/// (real, nonnegative) spectrum of `S^{1/2} A S^{1/2}`, sorted descending.
pub fn psd_product_eigenvalues(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Vec<f64> {
    let rs = sym_sqrt(s);
    let m = symmetrize(&(&rs * symmetrize(a) * &rs));
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Nonzero part of a spectrum under a relative threshold; returns (values, rank).
pub fn nonzero_spectrum(ev: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
    let max = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = (rel_tol * max).max(1e-300);
    let vals: Vec<f64> = ev.iter().copied().filter(|v| v.abs() > cut).collect();
    let rank = vals.len();
    (vals, rank)
}

pub fn quadratic_form(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_roundtrip_and_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, cond) = sym_inverse(&m).unwrap();
        let id = &m * &inv;
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(0, 1)], 0.0, epsilon = 1e-12);
        assert!(cond > 1.0 && cond < 10.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(sym_inverse(&sing), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn product_spectrum_matches_hand_computation() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let ev = psd_product_eigenvalues(&a, &s);
        assert_relative_eq!(ev[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 2.0, epsilon = 1e-12);
        let (vals, rank) = nonzero_spectrum(&ev, 1e-10);
        assert_eq!(rank, 2);
        assert_eq!(vals.len(), 2);
    }
}
