use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

use super::svd::{count_above, standard_rank_threshold, svd_dmatrix};
use super::{Matrix, ObservationMask};

/// `P_Ω(x)`: keeps the known entries of `x` and zeroes the rest.
pub fn project_mask(x: &Matrix, mask: &ObservationMask) -> Result<Matrix> {
    mask.require_shape(x, "project_mask")?;
    let mut out = DMatrix::zeros(x.rows(), x.cols());
    for &(i, j) in mask.known() {
        out[(i, j)] = x[(i, j)];
    }
    Ok(Matrix::from_dmatrix_unchecked(out))
}

/// Nearest point of `A_Ω = {X : P_Ω(X - observed) = 0}` to `y`: `y` with
/// its known entries overwritten by `observed`.
pub fn project_affine_mask(y: &Matrix, mask: &ObservationMask, observed: &Matrix) -> Result<Matrix> {
    mask.require_shape(y, "project_affine_mask")?;
    mask.require_shape(observed, "project_affine_mask")?;
    let mut out = y.as_dmatrix().clone();
    for &(i, j) in mask.known() {
        out[(i, j)] = observed[(i, j)];
    }
    Ok(Matrix::from_dmatrix_unchecked(out))
}

/// Output of [`hard_threshold_with_ties`].
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholded {
    pub values: Vec<f64>,
    /// Kept indices, ascending.
    pub support: Vec<usize>,
    /// The s-th and (s+1)-th largest magnitudes are equal and nonzero, so
    /// the lowest-index candidate was kept.
    pub tie: bool,
}

/// Keeps the `s` largest-magnitude entries of `x` in place.
pub fn hard_threshold(x: &[f64], s: usize) -> Result<Vec<f64>> {
    Ok(hard_threshold_with_ties(x, s)?.values)
}

pub fn hard_threshold_with_ties(x: &[f64], s: usize) -> Result<Thresholded> {
    if s == 0 || s > x.len() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} outside 1..={}",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    // stable: equal magnitudes keep ascending index order
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    let tie = s < x.len() && {
        let (kept, dropped) = (x[order[s - 1]].abs(), x[order[s]].abs());
        kept > 0.0 && kept == dropped
    };
    let mut support = order[..s].to_vec();
    support.sort_unstable();
    let mut values = vec![0.0; x.len()];
    for &i in &support {
        values[i] = x[i];
    }
    Ok(Thresholded {
        values,
        support,
        tie,
    })
}

/// Projector onto `{x : A x = b}` for a fixed full-row-rank `A`.
///
/// Factors `A A^T` once; each projection costs two matrix-vector products
/// and a pair of triangular solves.
#[derive(Clone, Debug)]
pub struct AffineSolver {
    a: Matrix,
    gram: Cholesky<f64, Dyn>,
}

impl AffineSolver {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("constraint matrix is {rows}x{cols}")));
        }
        if rows > cols {
            return Err(Error::RankDeficient { rank: cols, rows });
        }
        let (_, sigma, _) = svd_dmatrix(a.as_dmatrix())?;
        let rank = count_above(&sigma, standard_rank_threshold(rows, cols, sigma[0]));
        if rank < rows {
            return Err(Error::RankDeficient { rank, rows });
        }
        let m = a.as_dmatrix();
        let gram = Cholesky::new(m * m.transpose()).ok_or(Error::RankDeficient { rank, rows })?;
        Ok(Self { a: a.clone(), gram })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// `y + A^T (A A^T)^{-1} (b - A y)`.
    pub fn project(&self, y: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(y, b)?;
        let y = DVector::from_column_slice(y);
        let b = DVector::from_column_slice(b);
        Ok(self.project_dvec(&y, &b).as_slice().to_vec())
    }

    /// `A^T (A A^T)^{-1} b`, the feasible point of least norm.
    pub fn min_norm_solution(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.project(&vec![0.0; self.cols()], b)
    }

    /// Orthogonal projection of `z` onto `Null(A)`.
    pub fn null_space_part(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.project(z, &vec![0.0; self.rows()])
    }

    pub(crate) fn project_dvec(&self, y: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let a = self.a.as_dmatrix();
        let residual = b - a * y;
        let w = self.gram.solve(&residual);
        y + a.tr_mul(&w)
    }

    fn check_dims(&self, y: &[f64], b: &[f64]) -> Result<()> {
        if y.len() != self.cols() || b.len() != self.rows() {
            return Err(Error::Dimension(format!(
                "point of length {} and rhs of length {} against a {}x{} system",
                y.len(),
                b.len(),
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }
}

/// Nearest point of `{x : A x = b}` to `y`, using the factorization held by
/// `solver`.
pub fn project_affine_linear(y: &[f64], b: &[f64], solver: &AffineSolver) -> Result<Vec<f64>> {
    solver.project(y, b)
}
