//! Dense linear algebra helpers: numerical rank, range membership, PSD square roots
//! and a thin SVD that tolerates empty dimensions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default multiplier for the rank threshold `tol_factor * s_max * max(rows, cols) * eps`.
pub const DEFAULT_TOL_FACTOR: f64 = 100.0;

/// Default relative tolerance for [`in_range`].
pub const DEFAULT_RANGE_TOL: f64 = 1e-8;

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn check_finite_vec(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Rank cut-off for a matrix of the given shape whose largest singular value is `s_max`.
pub fn rank_threshold(s_max: f64, rows: usize, cols: usize, tol_factor: f64) -> f64 {
    tol_factor * s_max * rows.max(cols) as f64 * f64::EPSILON
}

/// Thin SVD `a = u * diag(s) * v^T` with `k = min(rows, cols)` columns.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return ThinSvd {
            u: DMatrix::zeros(m, 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(n, 0),
        };
    }
    let svd = a.clone().svd(true, true);
    ThinSvd {
        u: svd.u.expect("u requested"),
        s: svd.singular_values,
        v: svd.v_t.expect("v_t requested").transpose(),
    }
}

/// Number of singular values above `tol_factor * s_max * max(rows, cols) * eps`.
pub fn numerical_rank(m: &DMatrix<f64>, tol_factor: f64) -> Result<usize> {
    check_finite(m, "matrix passed to numerical_rank")?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let s = m.singular_values();
    let s_max = s.max();
    if s_max <= 0.0 {
        return Ok(0);
    }
    let tau = rank_threshold(s_max, m.nrows(), m.ncols(), tol_factor);
    Ok(s.iter().filter(|&&x| x > tau).count())
}

/// Orthonormal basis of the numerical range of `m`, truncated at its numerical rank.
pub fn range_basis(m: &DMatrix<f64>, tol_factor: f64) -> Result<DMatrix<f64>> {
    check_finite(m, "matrix passed to range_basis")?;
    let svd = thin_svd(m);
    let s_max = svd.s.iter().cloned().fold(0.0, f64::max);
    if s_max <= 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let tau = rank_threshold(s_max, m.nrows(), m.ncols(), tol_factor);
    let keep: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] > tau).collect();
    Ok(svd.u.select_columns(keep.iter()))
}

/// Whether `v` lies in the numerical range of `m`: `|(I - U U^T) v| <= tol * |v|`.
///
/// The zero vector is always in range.
pub fn in_range(v: &DVector<f64>, m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    in_range_with(v, m, tol, DEFAULT_TOL_FACTOR)
}

pub fn in_range_with(v: &DVector<f64>, m: &DMatrix<f64>, tol: f64, tol_factor: f64) -> Result<bool> {
    if v.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "vector of length {} against matrix with {} rows",
            v.len(),
            m.nrows()
        )));
    }
    check_finite_vec(v, "vector passed to in_range")?;
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(true);
    }
    let u = range_basis(m, tol_factor)?;
    let resid = v - &u * (u.transpose() * v);
    Ok(resid.norm() <= tol * norm)
}

/// Square-root factor `L` (n x r) with `L L^T = sigma` up to eigenvalues below the rank threshold.
pub fn psd_sqrt_factor(sigma: &DMatrix<f64>, tol_factor: f64) -> Result<DMatrix<f64>> {
    check_finite(sigma, "covariance")?;
    let n = sigma.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if lmax == 0.0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let tau = rank_threshold(lmax, n, n, tol_factor);
    let mut cols = Vec::new();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tau {
            cols.push(eig.eigenvectors.column(i) * l.sqrt());
        }
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn eigen_extremes(sigma: &DMatrix<f64>) -> (f64, f64) {
    if sigma.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Numerically stable `log(sum(exp(x)))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Horizontal concatenation `[a b]`.
pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub(crate) fn vcat_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_outer_product_sum() {
        let a = DMatrix::from_fn(6, 2, |i, j| (i * 3 + j) as f64 + 0.5);
        let m = &a * a.transpose();
        assert_eq!(numerical_rank(&m, DEFAULT_TOL_FACTOR).unwrap(), 2);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), DEFAULT_TOL_FACTOR).unwrap(), 0);
        assert_eq!(numerical_rank(&DMatrix::zeros(0, 3), DEFAULT_TOL_FACTOR).unwrap(), 0);
    }

    #[test]
    fn rank_rejects_nan() {
        let mut m = DMatrix::identity(3, 3);
        m[(1, 2)] = f64::NAN;
        assert!(matches!(numerical_rank(&m, 100.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn range_membership() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 0.0]);
        let m = &a * a.transpose();
        let inside = DVector::from_vec(vec![2.0, 4.0, 0.0]);
        let outside = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(in_range(&inside, &m, 1e-8).unwrap());
        assert!(!in_range(&outside, &m, 1e-8).unwrap());
        assert!(in_range(&DVector::zeros(3), &DMatrix::zeros(3, 3), 1e-8).unwrap());
    }

    #[test]
    fn sqrt_factor_reproduces_covariance() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 - 3.0);
        let s = &a * a.transpose();
        let l = psd_sqrt_factor(&s, DEFAULT_TOL_FACTOR).unwrap();
        assert_eq!(l.ncols(), numerical_rank(&s, DEFAULT_TOL_FACTOR).unwrap());
        assert!((&l * l.transpose() - &s).norm() < 1e-10 * s.norm());
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
