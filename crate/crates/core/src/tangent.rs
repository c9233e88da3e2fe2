//! Tangent-space machinery for the manifold of rank-r matrices.
//!
//! The tangent space at a rank-r matrix `M` is `{XM + MY}`. Flattening `X`
//! row by row and `Y` column by column turns it into the range of the
//! `n^2 x 2n^2` matrix built by [`build_tangent_matrix`]: the row for
//! position `(i, j)` carries column `j` of `M` in block `i` and row `i` of
//! `M` in block `n + j`, because `(XM + MY)_{ij} = <X^i, M_j> + <M^i, Y_j>`.
//!
//! Selecting the rows indexed by a mask Ω gives `T^Ω`. The transversality
//! certificate asks whether `rank(T^Ω)` reaches the manifold dimension
//! `2nr - r^2`; [`transversality_report`] evaluates that and three
//! equivalent formulations independently so they can be cross-checked.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{count_above, standard_rank_threshold, svd, Matrix, ObservationMask};
use crate::linalg::svd_dmatrix;

/// Largest `n` accepted by the dense tangent constructions.
///
/// `T_M` has `2 n^4` entries: 268 MB of `f64` at `n = 64`. Past that use
/// [`build_v_omega`], which is only `|Ω| x |Ω|`.
pub const MAX_TANGENT_N: usize = 64;

/// The matrix `T_M` whose range is the tangent space at `M`.
#[derive(Clone, Debug)]
pub struct TangentMatrix {
    pub n: usize,
    pub data: Matrix,
    /// Matrix position of each row; lexicographic, so row `i*n + j` is `(i, j)`.
    pub row_index: Vec<(usize, usize)>,
}

impl TangentMatrix {
    /// Row number of position `(i, j)`.
    pub fn row_of(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

/// Rows of `T_M` split by a mask.
#[derive(Clone, Debug)]
pub struct SplitRows {
    /// `T^Ω`, one row per known position.
    pub omega: Matrix,
    /// `T^{Ω^c}`, possibly with zero rows.
    pub complement: Matrix,
    pub omega_index: Vec<(usize, usize)>,
    pub complement_index: Vec<(usize, usize)>,
}

fn require_square(m: &Matrix, what: &str) -> Result<usize> {
    if m.rows() != m.cols() {
        return Err(Error::Dimension(format!(
            "{what} needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.rows())
}

fn require_dense_limit(n: usize) -> Result<()> {
    if n > MAX_TANGENT_N {
        return Err(Error::InvalidArgument(format!(
            "n = {n} exceeds the dense tangent limit {MAX_TANGENT_N}"
        )));
    }
    Ok(())
}

pub fn build_tangent_matrix(m: &Matrix) -> Result<TangentMatrix> {
    let n = require_square(m, "build_tangent_matrix")?;
    require_dense_limit(n)?;
    let n2 = n * n;
    let mut data = DMatrix::zeros(n2, 2 * n2);
    let mut row_index = Vec::with_capacity(n2);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                data[(row, i * n + k)] = m[(k, j)];
                data[(row, n2 + j * n + k)] = m[(i, k)];
            }
            row_index.push((i, j));
        }
    }
    Ok(TangentMatrix {
        n,
        data: Matrix::from_dmatrix_unchecked(data),
        row_index,
    })
}

fn gather_rows(t: &TangentMatrix, positions: &[(usize, usize)]) -> Matrix {
    let cols = t.data.cols();
    let src = t.data.as_dmatrix();
    let mut out = DMatrix::zeros(positions.len(), cols);
    for (dst, &(i, j)) in positions.iter().enumerate() {
        out.set_row(dst, &src.row(t.row_of(i, j)));
    }
    Matrix::from_dmatrix_unchecked(out)
}

/// Splits `T_M` into `T^Ω` and `T^{Ω^c}`, both in lexicographic position order.
pub fn select_rows(t: &TangentMatrix, mask: &ObservationMask) -> Result<SplitRows> {
    if mask.rows() != t.n || mask.cols() != t.n {
        return Err(Error::Dimension(format!(
            "mask is {}x{} but tangent matrix is for n = {}",
            mask.rows(),
            mask.cols(),
            t.n
        )));
    }
    let omega_index = mask.known().to_vec();
    let complement_index = mask.complement();
    Ok(SplitRows {
        omega: gather_rows(t, &omega_index),
        complement: gather_rows(t, &complement_index),
        omega_index,
        complement_index,
    })
}

/// The Gram matrix `V^Ω(M) = T^Ω (T^Ω)^T`, assembled entrywise from row and
/// column inner products of `M` without forming `T_M`.
pub fn build_v_omega(m: &Matrix, mask: &ObservationMask) -> Result<Matrix> {
    require_square(m, "build_v_omega")?;
    mask.require_shape(m, "build_v_omega")?;
    let a = m.as_dmatrix();
    let row_gram = a * a.transpose();
    let col_gram = a.tr_mul(a);
    let known = mask.known();
    let size = known.len();
    let mut v = DMatrix::zeros(size, size);
    for (p, &(i1, j1)) in known.iter().enumerate() {
        for (q, &(i2, j2)) in known.iter().enumerate() {
            v[(p, q)] = match (i1 == i2, j1 == j2) {
                (false, false) => 0.0,
                (true, false) => col_gram[(j1, j2)],
                (false, true) => row_gram[(i1, i2)],
                (true, true) => row_gram[(i1, i1)] + col_gram[(j1, j1)],
            };
        }
    }
    Ok(Matrix::from_dmatrix_unchecked(v))
}

/// Outcome of the four equivalent transversality tests at `(M, Ω)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TransversalityReport {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    /// `2nr - r^2`.
    pub dim_manifold: usize,
    /// Rank of the full `T_M`; equals `dim_manifold` for exact rank-r input.
    pub rank_tangent: usize,
    pub rank_t_omega: usize,
    pub rank_v_omega: usize,
    /// Rowspace(T^{Ω^c}) ⊆ Rowspace(T^Ω).
    pub rowspace_inclusion_holds: bool,
    /// NullSpace(T^Ω) ⊆ NullSpace(T^{Ω^c}), i.e. the tangent spaces meet only at 0.
    pub intersection_trivial: bool,
    /// rank(V^Ω) = 2nr - r^2.
    pub v_omega_full_rank: bool,
    /// rank(T^Ω) = 2nr - r^2; local linear convergence of the iteration is certified.
    pub certified_linear: bool,
}

impl TransversalityReport {
    /// Whether the four formulations returned the same verdict.
    pub fn conditions_agree(&self) -> bool {
        let c = self.certified_linear;
        self.rowspace_inclusion_holds == c && self.intersection_trivial == c && self.v_omega_full_rank == c
    }
}

fn rank_of(m: &DMatrix<f64>) -> Result<(usize, f64)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok((0, 0.0));
    }
    let (_, sigma, _) = svd_dmatrix(m)?;
    let top = sigma[0];
    Ok((
        count_above(&sigma, standard_rank_threshold(m.nrows(), m.ncols(), top)),
        top,
    ))
}

/// Rank of a Gram matrix `A Aᵀ`. Its singular values are the squares of
/// those of `A`, so the relative cutoff is squared, but never taken below
/// the roundoff level of the product.
fn gram_rank(g: &DMatrix<f64>) -> Result<usize> {
    if g.nrows() == 0 {
        return Ok(0);
    }
    let (_, sigma, _) = svd_dmatrix(g)?;
    let k = g.nrows() as f64;
    let squared = standard_rank_threshold(g.nrows(), g.ncols(), 1.0).powi(2);
    let floor = 16.0 * k * f64::EPSILON;
    Ok(count_above(&sigma, sigma[0] * squared.max(floor)))
}

/// Orthonormal basis of `NullSpace(a)` as columns, from the right singular
/// vectors of `a` padded to a square matrix.
fn null_basis(a: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let cols = a.ncols();
    let mut padded = DMatrix::zeros(cols.max(a.nrows()), cols);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let (_, _, v) = svd_dmatrix(&padded)?;
    Ok(v.columns(rank, cols - rank).into_owned())
}

pub fn transversality_report(m: &Matrix, mask: &ObservationMask, r: usize) -> Result<TransversalityReport> {
    let n = require_square(m, "transversality_report")?;
    require_dense_limit(n)?;
    mask.require_shape(m, "transversality_report")?;
    let numerical = svd(m)?.numerical_rank();
    if r == 0 || numerical != r {
        return Err(Error::RankMismatch {
            declared: r,
            numerical,
        });
    }
    let dim_manifold = 2 * n * r - r * r;

    let t = build_tangent_matrix(m)?;
    let split = select_rows(&t, mask)?;
    let (rank_tangent, t_top) = rank_of(t.data.as_dmatrix())?;
    let (rank_t_omega, _) = rank_of(split.omega.as_dmatrix())?;
    let v = build_v_omega(m, mask)?;
    let rank_v_omega = gram_rank(v.as_dmatrix())?;

    // condition 2: stacking T^{Ω^c} under T^Ω adds no rank
    let rowspace_inclusion_holds = rank_tangent == rank_t_omega;

    // condition 1, directly: T^{Ω^c} annihilates the null space of T^Ω
    let intersection_trivial = if split.complement.rows() == 0 || rank_t_omega == t.data.cols() {
        true
    } else {
        let basis = null_basis(split.omega.as_dmatrix(), rank_t_omega)?;
        let image = split.complement.as_dmatrix() * basis;
        let (_, leak) = rank_of(&image)?;
        leak <= standard_rank_threshold(t.data.rows(), t.data.cols(), t_top)
    };

    Ok(TransversalityReport {
        n,
        r,
        m: mask.len(),
        dim_manifold,
        rank_tangent,
        rank_t_omega,
        rank_v_omega,
        rowspace_inclusion_holds,
        intersection_trivial,
        v_omega_full_rank: rank_v_omega == dim_manifold,
        certified_linear: rank_t_omega == dim_manifold,
    })
}

fn leading_projectors(u: &Matrix, v: &Matrix, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let ur = u.as_dmatrix().columns(0, r);
    let vr = v.as_dmatrix().columns(0, r);
    (ur * ur.transpose(), vr * vr.transpose())
}

fn project_onto_tangent(pu: &DMatrix<f64>, pv: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let pu_y = pu * y;
    let y_pv = y * pv;
    let pu_y_pv = &pu_y * pv;
    pu_y + y_pv - pu_y_pv
}

/// Orthogonal projection of `y` onto the tangent space at the rank-`r`
/// matrix `m`: `P_U Y + Y P_V - P_U Y P_V`.
pub fn tangent_projection(m: &Matrix, y: &Matrix, r: usize) -> Result<Matrix> {
    m.require_same_shape(y, "tangent_projection")?;
    let f = svd(m)?;
    let numerical = f.numerical_rank();
    if r == 0 || numerical != r {
        return Err(Error::RankMismatch {
            declared: r,
            numerical,
        });
    }
    let (pu, pv) = leading_projectors(&f.u, &f.v, r);
    Ok(Matrix::from_dmatrix_unchecked(project_onto_tangent(
        &pu,
        &pv,
        y.as_dmatrix(),
    )))
}

/// Relative singular gap required by [`svd_truncation_differential`].
pub const DIFFERENTIAL_GAP_TOL: f64 = 1e-8;

/// Directional derivative of the rank-`r` SVD truncation at `x` along `y`.
///
/// The tangent projection at the truncated point is corrected by the
/// curvature terms along `Φ±_{i,j} = (u_j v_i^T ± u_i v_j^T) / √2` for
/// `i <= r < j`, weighted `σ_j / (σ_i - σ_j)` and `-σ_j / (σ_i + σ_j)`.
pub fn svd_truncation_differential(x: &Matrix, y: &Matrix, r: usize) -> Result<Matrix> {
    x.require_same_shape(y, "svd_truncation_differential")?;
    let limit = x.rows().min(x.cols());
    if r == 0 || r > limit {
        return Err(Error::Dimension(format!("rank {r} outside 1..={limit}")));
    }
    let f = svd(x)?;
    let sigma = &f.sigma;
    let k = sigma.len();
    if r < k {
        let gap = sigma[r - 1] - sigma[r];
        let threshold = DIFFERENTIAL_GAP_TOL * sigma[0];
        if !(gap >= threshold) || sigma[r - 1] <= 0.0 {
            return Err(Error::SingularGap {
                index: r,
                next: r + 1,
                gap,
                threshold,
            });
        }
    }
    let (pu, pv) = leading_projectors(&f.u, &f.v, r);
    let yd = y.as_dmatrix();
    let mut out = project_onto_tangent(&pu, &pv, yd);

    let u = f.u.as_dmatrix();
    let v = f.v.as_dmatrix();
    // coefficients of y in the singular basis: c[a][b] = <y, u_a v_b^T>
    let c = u.tr_mul(yd) * v;
    let mut d = DMatrix::<f64>::zeros(k, k);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..r {
        for j in r..k {
            let sj = sigma[j];
            if sj == 0.0 {
                continue;
            }
            let plus = (c[(j, i)] + c[(i, j)]) * half;
            let minus = (c[(j, i)] - c[(i, j)]) * half;
            let wp = sj / (sigma[i] - sj) * plus;
            let wm = -sj / (sigma[i] + sj) * minus;
            // Φ+ = (e_j e_i^T + e_i e_j^T)/√2, Φ- = (e_j e_i^T - e_i e_j^T)/√2 in this basis
            d[(j, i)] += (wp + wm) * half;
            d[(i, j)] += (wp - wm) * half;
        }
    }
    out += u * d * v.transpose();
    Ok(Matrix::from_dmatrix_unchecked(out))
}
