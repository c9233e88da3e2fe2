mod common;

use apkit::linalg::{svd, svd_truncate, Matrix, ObservationMask};
use apkit::tangent::{
    build_tangent_matrix, build_v_omega, select_rows, svd_truncation_differential, tangent_projection,
    transversality_report,
};
use apkit::Error;
use common::*;
use nalgebra::DMatrix;

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

fn mask_1based(n: usize, pairs: &[(usize, usize)]) -> ObservationMask {
    ObservationMask::new(n, n, pairs.iter().map(|&(i, j)| (i - 1, j - 1))).unwrap()
}

#[test]
fn two_by_two_tangent_rows() {
    let m = Matrix::from_rows(&[[1.0, 4.0], [2.0, 8.0]]).unwrap();
    let mask = mask_1based(2, &[(1, 2), (2, 1)]);
    let t = build_tangent_matrix(&m).unwrap();
    let split = select_rows(&t, &mask).unwrap();
    let omega = vec![
        vec![4.0, 8.0, 0.0, 0.0, 0.0, 0.0, 1.0, 4.0],
        vec![0.0, 0.0, 1.0, 2.0, 2.0, 8.0, 0.0, 0.0],
    ];
    let complement = vec![
        vec![1.0, 2.0, 0.0, 0.0, 1.0, 4.0, 0.0, 0.0],
        vec![0.0, 0.0, 4.0, 8.0, 0.0, 0.0, 2.0, 8.0],
    ];
    assert_eq!(rows_of(&split.omega), omega);
    assert_eq!(rows_of(&split.complement), complement);
    assert_eq!(split.complement_index, vec![(0, 0), (1, 1)]);
    for (row, &(i, j)) in t.row_index.iter().enumerate() {
        let expected = if mask.contains(i, j) {
            &omega[split.omega_index.iter().position(|&p| p == (i, j)).unwrap()]
        } else {
            &complement[split.complement_index.iter().position(|&p| p == (i, j)).unwrap()]
        };
        assert_eq!(&rows_of(&t.data)[row], expected);
    }
}

#[test]
fn three_by_three_tangent_rows() {
    let m = Matrix::from_rows(&[[-3.0, -1.0, -4.0], [9.0, 3.0, 12.0], [6.0, 2.0, 8.0]]).unwrap();
    let mask = mask_1based(3, &[(1, 1), (1, 3), (2, 2), (3, 1)]);
    let split = select_rows(&build_tangent_matrix(&m).unwrap(), &mask).unwrap();
    let omega: Vec<Vec<f64>> = [
        [-3, 9, 6, 0, 0, 0, 0, 0, 0, -3, -1, -4, 0, 0, 0, 0, 0, 0],
        [-4, 12, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -3, -1, -4],
        [0, 0, 0, -1, 3, 2, 0, 0, 0, 0, 0, 0, 9, 3, 12, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, -3, 9, 6, 6, 2, 8, 0, 0, 0, 0, 0, 0],
    ]
    .iter()
    .map(|r| r.iter().map(|&v| v as f64).collect())
    .collect();
    let complement: Vec<Vec<f64>> = [
        [-1, 3, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, -3, -1, -4, 0, 0, 0],
        [0, 0, 0, -3, 9, 6, 0, 0, 0, 9, 3, 12, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, -4, 12, 8, 0, 0, 0, 0, 0, 0, 0, 0, 0, 9, 3, 12],
        [0, 0, 0, 0, 0, 0, -1, 3, 2, 0, 0, 0, 6, 2, 8, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, -4, 12, 8, 0, 0, 0, 0, 0, 0, 6, 2, 8],
    ]
    .iter()
    .map(|r| r.iter().map(|&v| v as f64).collect())
    .collect();
    assert_eq!(rows_of(&split.omega), omega);
    assert_eq!(rows_of(&split.complement), complement);
}

#[test]
fn integer_example_ranks_match_elimination() {
    let m = Matrix::from_rows(&[[-3.0, -1.0, -4.0], [9.0, 3.0, 12.0], [6.0, 2.0, 8.0]]).unwrap();
    let mask = mask_1based(3, &[(1, 1), (1, 3), (2, 2), (3, 1)]);
    let t = build_tangent_matrix(&m).unwrap();
    let split = select_rows(&t, &mask).unwrap();
    let report = transversality_report(&m, &mask, 1).unwrap();
    assert_eq!(report.rank_tangent, elimination_rank(t.data.as_dmatrix(), 1e-12));
    assert_eq!(report.rank_t_omega, elimination_rank(split.omega.as_dmatrix(), 1e-12));
    assert_eq!(report.dim_manifold, 5);
    // four observations cannot pin down a 5-dimensional manifold
    assert!(!report.certified_linear);
    assert!(report.conditions_agree());
}

#[test]
fn v_omega_two_by_two() {
    let m = Matrix::from_rows(&[[1.0, 4.0], [2.0, 8.0]]).unwrap();
    let mask = mask_1based(2, &[(1, 2), (2, 1)]);
    let v = build_v_omega(&m, &mask).unwrap();
    assert_eq!(rows_of(&v), vec![vec![97.0, 0.0], vec![0.0, 73.0]]);
}

#[test]
fn v_omega_is_gram_of_t_omega() {
    let mut rng = rng(11);
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let r = 1 + trial % 2;
        let m = low_rank(n, r, &mut rng);
        let mask = random_mask(n, (n * n * 2) / 3, &mut rng);
        let split = select_rows(&build_tangent_matrix(&m).unwrap(), &mask).unwrap();
        let t = split.omega.as_dmatrix();
        let gram = t * t.transpose();
        let v = build_v_omega(&m, &mask).unwrap();
        assert!((v.as_dmatrix() - gram).amax() <= 1e-10 * (1.0 + v.max_abs()));
    }
}

#[test]
fn fixture15_is_certified() {
    let (printed, snapped, mask) = fixture15();
    assert!(matches!(
        transversality_report(&printed, &mask, 2),
        Err(Error::RankMismatch { declared: 2, .. })
    ));
    let report = transversality_report(&snapped, &mask, 2).unwrap();
    assert_eq!(report.m, 162);
    assert_eq!(report.rank_v_omega, 56);
    assert_eq!(report.rank_tangent, 56);
    assert!(report.certified_linear);
    assert!(report.conditions_agree());
}

#[test]
fn missing_row_breaks_certificate() {
    let mut rng = rng(5);
    let m = low_rank(5, 1, &mut rng);
    let mask = ObservationMask::from_predicate(5, 5, |i, _| i != 2).unwrap();
    let report = transversality_report(&m, &mask, 1).unwrap();
    assert!(!report.certified_linear);
    assert!(!report.intersection_trivial);
    assert!(report.conditions_agree());
}

#[test]
fn report_rejects_wrong_rank_and_shape() {
    let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let mask = ObservationMask::full(2, 2).unwrap();
    assert!(matches!(
        transversality_report(&m, &mask, 1),
        Err(Error::RankMismatch {
            declared: 1,
            numerical: 2
        })
    ));
    let rect = Matrix::zeros(2, 3);
    assert!(transversality_report(&rect, &ObservationMask::full(2, 3).unwrap(), 1).is_err());
}

fn spectral(u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>) -> Matrix {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(sigma));
    Matrix::from_dmatrix(u * d * v.transpose()).unwrap()
}

fn finite_difference(x: &Matrix, y: &Matrix, r: usize, h: f64) -> Matrix {
    let plus = svd_truncate(&x.add(&y.scale(h)).unwrap(), r).unwrap().0;
    let minus = svd_truncate(&x.sub(&y.scale(h)).unwrap(), r).unwrap().0;
    plus.sub(&minus).unwrap().scale(0.5 / h)
}

#[test]
fn differential_matches_central_differences() {
    let mut rng = rng(21);
    for _ in 0..25 {
        let u = orthogonal(5, &mut rng);
        let v = orthogonal(5, &mut rng);
        let sigma = [5.0, 3.5, 1.2, 0.4, 0.1];
        let x = spectral(&u, &sigma, &v);
        let y = gaussian(5, 5, &mut rng);
        let d = svd_truncation_differential(&x, &y, 2).unwrap();
        let fd = finite_difference(&x, &y, 2, 1e-6);
        let rel = d.sub(&fd).unwrap().frobenius_norm() / d.frobenius_norm();
        assert!(rel <= 1e-4, "relative error {rel}");
    }
}

#[test]
fn differential_reduces_to_tangent_projection() {
    let mut rng = rng(8);
    let m = low_rank(6, 2, &mut rng);
    let y = gaussian(6, 6, &mut rng);
    let d = svd_truncation_differential(&m, &y, 2).unwrap();
    let p = tangent_projection(&m, &y, 2).unwrap();
    assert!(max_abs_diff(&d, &p) <= 1e-8);
}

#[test]
fn differential_requires_gap() {
    let m = Matrix::identity(3);
    let y = Matrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64);
    assert!(matches!(svd_truncation_differential(&m, &y, 1), Err(Error::SingularGap { .. })));
}

#[test]
fn tangent_projection_is_idempotent_and_orthogonal() {
    let mut rng = rng(3);
    let m = low_rank(7, 3, &mut rng);
    let y = gaussian(7, 7, &mut rng);
    let p = tangent_projection(&m, &y, 3).unwrap();
    let pp = tangent_projection(&m, &p, 3).unwrap();
    assert!(max_abs_diff(&p, &pp) <= 1e-10);
    let resid = y.sub(&p).unwrap();
    assert!(p.dot(&resid).unwrap().abs() <= 1e-9 * y.frobenius_norm().powi(2));
    // M itself is tangent
    let pm = tangent_projection(&m, &m, 3).unwrap();
    assert!(max_abs_diff(&pm, &m) <= 1e-10 * m.max_abs());
    assert_eq!(svd(&p).unwrap().sigma.len(), 7);
}
