#![allow(dead_code)]

use std::path::PathBuf;

use apkit::bench::io::{read_mask_csv, read_matrix_csv};
use apkit::linalg::{svd_truncate, Matrix, ObservationMask};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

/// The printed 15x15 matrix, its rank-2 truncation, and the mask.
pub fn fixture15() -> (Matrix, Matrix, ObservationMask) {
    let printed = read_matrix_csv(&data_path("fixture15_m.csv")).unwrap();
    let mask = read_mask_csv(&data_path("fixture15_mask.csv"), 15, 15).unwrap();
    let snapped = svd_truncate(&printed, 2).unwrap().0;
    (printed, snapped, mask)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn low_rank(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Matrix {
    gaussian(n, r, rng).matmul(&gaussian(r, n, rng)).unwrap()
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(n, n, rng).into_dmatrix();
    g.qr().q()
}

pub fn random_mask(n: usize, m: usize, rng: &mut ChaCha8Rng) -> ObservationMask {
    let cells = rand::seq::index::sample(rng, n * n, m);
    ObservationMask::new(n, n, cells.into_iter().map(|c| (c / n, c % n))).unwrap()
}

/// Rank by Gaussian elimination with partial pivoting and a relative pivot
/// cutoff, independent of any SVD.
pub fn elimination_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let mut a = a.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax();
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (p, best) = (rank..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= rel_tol * scale {
            continue;
        }
        a.swap_rows(rank, p);
        for i in rank + 1..rows {
            let f = a[(i, c)] / a[(rank, c)];
            if f != 0.0 {
                for k in c..cols {
                    a[(i, k)] -= f * a[(rank, k)];
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

/// A nonzero vector supported on `cols` with `A z = 0`, found by reducing
/// `A[:, cols]` to row echelon form and back-substituting a free variable.
pub fn sparse_null_vector(a: &Matrix, cols: &[usize], rel_tol: f64) -> Option<Vec<f64>> {
    let rows = a.rows();
    let s = cols.len();
    let mut m = DMatrix::from_fn(rows, s, |i, k| a[(i, cols[k])]);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut row = 0;
    for c in 0..s {
        if row == rows {
            break;
        }
        let p = (row..rows).max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs())).unwrap();
        if m[(p, c)].abs() <= rel_tol * scale {
            continue;
        }
        m.swap_rows(row, p);
        let pivot = m[(row, c)];
        for k in 0..s {
            m[(row, k)] /= pivot;
        }
        for i in 0..rows {
            if i != row {
                let f = m[(i, c)];
                for k in 0..s {
                    m[(i, k)] -= f * m[(row, k)];
                }
            }
        }
        pivots.push(c);
        row += 1;
    }
    let free = (0..s).find(|c| !pivots.contains(c))?;
    let mut z = vec![0.0; s];
    z[free] = 1.0;
    for (r, &c) in pivots.iter().enumerate() {
        z[c] = -m[(r, free)];
    }
    let mut full = vec![0.0; a.cols()];
    for (k, &c) in cols.iter().enumerate() {
        full[c] = z[k];
    }
    Some(full)
}

/// Exhaustive search over all supports of size `s` for a null vector.
pub fn has_sparse_null_vector(a: &Matrix, s: usize) -> bool {
    use itertools::Itertools;
    (0..a.cols()).combinations(s).any(|cols| {
        sparse_null_vector(a, &cols, 1e-9).is_some_and(|z| {
            let az = a.apply(&z).unwrap();
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            az.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8 * nz * a.frobenius_norm()
        })
    })
}

/// Gaussian `rows x cols` matrix; with `plant = Some(k)` one column is
/// replaced by a combination of `k - 1` others (a zero column when `k = 1`).
pub fn planted_matrix(rows: usize, cols: usize, plant: Option<usize>, rng: &mut ChaCha8Rng) -> Matrix {
    let mut a = gaussian(rows, cols, rng).into_dmatrix();
    if let Some(k) = plant {
        let picks = rand::seq::index::sample(rng, cols, k).into_vec();
        let target = picks[0];
        let mut col = nalgebra::DVector::zeros(rows);
        for &p in &picks[1..] {
            let w: f64 = rng.sample(StandardNormal);
            col += a.column(p) * w;
        }
        a.set_column(target, &col);
    }
    Matrix::from_dmatrix(a).unwrap()
}
