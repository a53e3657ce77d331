//! Multiple linear regression with an intercept, solved through the SVD.
//!
//! The caller passes a column-centred design `H`; the intercept is then the
//! response mean and the coefficients are the minimum-norm least-squares
//! solution of `H beta ~ Y - mean(Y)`. Singular values below
//! `rel_tol * sigma_max` are treated as zero, so rank-deficient designs
//! (fewer rows than columns, duplicated columns) are handled without special
//! cases. Callers that centred the design themselves can also pass an
//! absolute floor: centring a column that is constant up to rounding leaves
//! pure noise, which a relative cutoff alone would fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Rounding level of a centred design relative to the Frobenius norm of the
/// design before centring.
pub const CENTRING_NOISE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
}

impl RegressionFit {
    /// Fit with all coefficients fixed at zero.
    pub fn intercept_only(y: &[f64], num_columns: usize) -> Self {
        let intercept = if y.is_empty() { 0.0 } else { y.iter().sum::<f64>() / y.len() as f64 };
        Self { intercept, coefficients: vec![0.0; num_columns], residuals: y.iter().map(|v| v - intercept).collect(), rank: 0 }
    }
}

pub fn fit_mlr_svd(y: &[f64], h: &DMatrix<f64>) -> Result<RegressionFit> {
    fit_mlr_svd_with_tol(y, h, DEFAULT_REL_TOL)
}

pub fn fit_mlr_svd_with_tol(y: &[f64], h: &DMatrix<f64>, rel_tol: f64) -> Result<RegressionFit> {
    fit_mlr_svd_with_floor(y, h, rel_tol, 0.0)
}

/// As [`fit_mlr_svd_with_tol`], also dropping singular values at or below `abs_floor`.
pub fn fit_mlr_svd_with_floor(y: &[f64], h: &DMatrix<f64>, rel_tol: f64, abs_floor: f64) -> Result<RegressionFit> {
    let m = y.len();
    if m == 0 {
        return Err(Error::NoSamples);
    }
    if h.nrows() != m {
        return Err(Error::InvalidDesign(format!("design has {} rows, response has {m}", h.nrows())));
    }
    if y.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDesign("non-finite entry".into()));
    }
    let d = h.ncols();
    let intercept = y.iter().sum::<f64>() / m as f64;
    let yc = DVector::from_iterator(m, y.iter().map(|v| v - intercept));
    if d == 0 {
        return Ok(RegressionFit { intercept, coefficients: vec![], residuals: yc.as_slice().to_vec(), rank: 0 });
    }

    let (beta, rank) = if m > d {
        // Tall design: reduce to the d x d triangular factor first.
        let qr = h.clone().qr();
        let mut qty = yc.clone();
        qr.q_tr_mul(&mut qty);
        let r = qr.r();
        let rhs = qty.rows(0, d).into_owned();
        min_norm_solve(r, &rhs, rel_tol, abs_floor)?
    } else {
        min_norm_solve(h.clone(), &yc, rel_tol, abs_floor)?
    };

    let fitted = h * &beta;
    let residuals = (yc - fitted).as_slice().to_vec();
    Ok(RegressionFit { intercept, coefficients: beta.as_slice().to_vec(), residuals, rank })
}

/// Minimum-norm solution of `a x ~ b` through the SVD of `a`, plus the numerical rank.
///
/// The SVD comes from `faer`: nalgebra 0.35 returns factors that do not
/// reconstruct some rank-deficient wide matrices (errors near 1e-2).
pub(crate) fn min_norm_solve(a: DMatrix<f64>, b: &DVector<f64>, rel_tol: f64, abs_floor: f64) -> Result<(DVector<f64>, usize)> {
    let (m, d) = a.shape();
    let mut x = DVector::zeros(d);
    if m == 0 || d == 0 {
        return Ok((x, 0));
    }
    let svd = faer::Mat::<f64>::from_fn(m, d, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|e| Error::InvalidDesign(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let sigma_max = (0..s.nrows()).map(|k| s[k]).fold(0.0_f64, f64::max);
    if sigma_max == 0.0 || sigma_max <= abs_floor {
        return Ok((x, 0));
    }
    let cutoff = (rel_tol * sigma_max).max(abs_floor);
    let mut rank = 0;
    for k in 0..s.nrows() {
        if s[k] > cutoff {
            rank += 1;
            let coef = (0..m).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s[k];
            for j in 0..d {
                x[j] += v[(j, k)] * coef;
            }
        }
    }
    Ok((x, rank))
}

/// Subtracts each column's mean in place.
pub fn center_columns(h: &mut DMatrix<f64>) {
    let m = h.nrows();
    if m == 0 {
        return;
    }
    for mut col in h.column_iter_mut() {
        let mean = col.sum() / m as f64;
        col.add_scalar_mut(-mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(xs: &[f64]) -> f64 {
        crate::stats::mean_and_variance(xs).1
    }

    #[test]
    fn constant_response() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 4.0, -1.5, -2.0]);
        let fit = fit_mlr_svd(&[2.0, 2.0, 2.0], &h).unwrap();
        assert_eq!(fit.intercept, 2.0);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn exact_linear_fit() {
        let h = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]);
        let fit = fit_mlr_svd(&[1.0, 2.0, 3.0], &h).unwrap();
        assert_eq!(fit.intercept, 2.0);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-14));
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn rejects_non_finite() {
        let h = DMatrix::from_column_slice(2, 1, &[f64::NAN, 0.0]);
        assert!(matches!(fit_mlr_svd(&[1.0, 2.0], &h), Err(Error::InvalidDesign(_))));
        let h = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(fit_mlr_svd(&[1.0, f64::INFINITY], &h), Err(Error::InvalidDesign(_))));
        assert!(matches!(fit_mlr_svd(&[1.0], &DMatrix::zeros(2, 1)), Err(Error::InvalidDesign(_))));
    }

    #[test]
    fn wide_design_rank_bounded() {
        // 3 rows, 8 columns.
        let mut h = DMatrix::from_fn(3, 8, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64);
        center_columns(&mut h);
        let fit = fit_mlr_svd(&[0.0, 1.0, 5.0], &h).unwrap();
        assert!(fit.rank <= 3);
        assert!(var(&fit.residuals) <= var(&[0.0, 1.0, 5.0]));
    }

    #[test]
    fn zero_columns() {
        let h = DMatrix::zeros(4, 0);
        let fit = fit_mlr_svd(&[1.0, 2.0, 3.0, 6.0], &h).unwrap();
        assert_eq!(fit.intercept, 3.0);
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.residuals, vec![-2.0, -1.0, 0.0, 3.0]);
    }

    #[test]
    fn all_zero_design() {
        let h = DMatrix::zeros(5, 3);
        let fit = fit_mlr_svd(&[1.0, 0.0, 0.0, 0.0, 0.0], &h).unwrap();
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.coefficients, vec![0.0; 3]);
    }
}
