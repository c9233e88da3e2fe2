use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::Matrix;

/// Relative cutoff used by "rank at most r" checks: singular values below
/// `RANK_REL_TOL * sigma_1` count as zero.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Two adjacent singular values closer than this (relative to sigma_1) are
/// treated as tied.
const TIE_REL_TOL: f64 = 8.0 * f64::EPSILON;

/// Thin singular value decomposition `X = U diag(sigma) V^T`.
///
/// `sigma` is sorted nonincreasing; equal values keep the order the
/// factorization produced them in.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    /// `sum_{i < r} sigma_i u_i v_i^T`.
    pub fn reconstruct(&self, r: usize) -> Matrix {
        let r = r.min(self.sigma.len());
        let u = self.u.as_dmatrix().columns(0, r);
        let v = self.v.as_dmatrix().columns(0, r);
        let mut us = u.clone_owned();
        for (k, s) in self.sigma.iter().take(r).enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        Matrix::from_dmatrix_unchecked(us * v.transpose())
    }

    /// True when sigma_r and sigma_{r+1} (1-based) coincide, so the rank-r
    /// truncation is not unique.
    pub fn has_tie_at(&self, r: usize) -> bool {
        if r == 0 || r >= self.sigma.len() {
            return false;
        }
        let top = self.sigma[0];
        let (a, b) = (self.sigma[r - 1], self.sigma[r]);
        a > 0.0 && a - b <= TIE_REL_TOL * top
    }

    /// Rank under the standard threshold of [`standard_rank_threshold`].
    pub fn numerical_rank(&self) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        count_above(
            &self.sigma,
            standard_rank_threshold(self.u.rows(), self.v.rows(), top),
        )
    }
}

/// `max(rows, cols) * sigma_1 * 1e-10`.
pub fn standard_rank_threshold(rows: usize, cols: usize, sigma1: f64) -> f64 {
    rows.max(cols) as f64 * sigma1 * 1e-10
}

/// Number of entries strictly greater than `threshold`.
pub fn count_above(values: &[f64], threshold: f64) -> usize {
    values.iter().filter(|&&s| s > threshold).count()
}

pub(crate) fn svd_dmatrix(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("svd of a {rows}x{cols} matrix")));
    }
    let decomposition = faer::Mat::<f64>::from_fn(rows, cols, |i, j| x[(i, j)])
        .thin_svd()
        .map_err(|_| Error::SvdFailed { rows, cols })?;
    let (u, s, v) = (decomposition.U(), decomposition.S().column_vector(), decomposition.V());
    let k = rows.min(cols);
    if (0..k).any(|i| !s[i].is_finite()) {
        return Err(Error::SvdFailed { rows, cols });
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u_sorted = DMatrix::zeros(rows, k);
    let mut v_sorted = DMatrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..rows {
            u_sorted[(i, dst)] = u[(i, src)];
        }
        for i in 0..cols {
            v_sorted[(i, dst)] = v[(i, src)];
        }
        sigma.push(s[src].max(0.0));
    }
    Ok((u_sorted, sigma, v_sorted))
}

/// Minimum-norm least-squares solution of `a w = b`, discarding singular
/// values below `max(rows, cols) * eps * sigma_1`.
pub(crate) fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (u, sigma, v) = svd_dmatrix(a)?;
    let cutoff = sigma[0] * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    let mut coeffs = u.tr_mul(b);
    for (c, &s) in coeffs.iter_mut().zip(&sigma) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    Ok(v * coeffs)
}

pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    let (u, sigma, v) = svd_dmatrix(x.as_dmatrix())?;
    Ok(SvdFactors {
        u: Matrix::from_dmatrix(u).map_err(|_| Error::SvdFailed {
            rows: x.rows(),
            cols: x.cols(),
        })?,
        sigma,
        v: Matrix::from_dmatrix(v).map_err(|_| Error::SvdFailed {
            rows: x.rows(),
            cols: x.cols(),
        })?,
    })
}

/// Best rank-`r` approximation of `x` in Frobenius norm, together with the
/// full factors it was cut from.
pub fn svd_truncate(x: &Matrix, r: usize) -> Result<(Matrix, SvdFactors)> {
    let limit = x.rows().min(x.cols());
    if r == 0 || r > limit {
        return Err(Error::Dimension(format!(
            "truncation rank {r} outside 1..={limit}"
        )));
    }
    let factors = svd(x)?;
    Ok((factors.reconstruct(r), factors))
}

/// Numerical rank with the threshold `max(rows, cols) * sigma_1 * 1e-10`.
pub fn numerical_rank(x: &Matrix) -> Result<usize> {
    Ok(svd(x)?.numerical_rank())
}

/// Whether `x` has at most `r` singular values above `RANK_REL_TOL * sigma_1`.
pub fn rank_at_most(x: &Matrix, r: usize) -> Result<bool> {
    let f = svd(x)?;
    let top = f.sigma.first().copied().unwrap_or(0.0);
    Ok(count_above(&f.sigma, RANK_REL_TOL * top) <= r)
}
