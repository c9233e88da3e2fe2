mod common;

use apkit::linalg::Matrix;
use apkit::sparse::{
    ap_sparse, ap_sparse_with_truth, check_null_intersection, check_projection_uniqueness, random_instance,
    recovery_frequency, trial_rng, Ensemble, SparseConfig, SparseInit, SparseProblem,
};
use common::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn doubled_identity_ties_are_flagged() {
    let a = Matrix::from_fn(4, 8, |i, j| if j % 4 == i { 1.0 } else { 0.0 });
    let problem = SparseProblem::new(&a, vec![1.0, 0.0, 0.0, 0.0], 1).unwrap();
    let res = ap_sparse(&problem, &SparseConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.tie_flag);
    assert_eq!(res.support, vec![0]);
    let expected = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert!(max_err(&res.x, &expected) < 1e-5);
    // brute force over the two candidate supports: both give the same residual
    for col in [0, 4] {
        let mut x = vec![0.0; 8];
        x[col] = 1.0;
        assert_eq!(a.apply(&x).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }
}

#[test]
fn seeded_gaussian_recovery() {
    let mut rng = trial_rng(2024, 4, 0);
    let (a, x_true) = random_instance(20, 40, 4, Ensemble::Gaussian, &mut rng);
    let b = a.apply(&x_true).unwrap();
    let problem = SparseProblem::new(&a, b, 4).unwrap();
    let res = ap_sparse(&problem, &SparseConfig::default()).unwrap();
    assert!(res.converged);
    assert!(max_err(&res.x, &x_true) < 1e-3);
}

#[test]
fn iterates_feasible_and_gap_monotone() {
    let mut rng = rng(77);
    for trial in 0..10 {
        let mut r = trial_rng(5, 6, trial);
        let (a, x_true) = random_instance(15, 30, 6, Ensemble::Gaussian, &mut r);
        let b = a.apply(&x_true).unwrap();
        let problem = SparseProblem::new(&a, b.clone(), 6).unwrap();
        let init = SparseInit::SeededRandomFeasible(rng.random());
        let config = SparseConfig {
            init,
            record_trace: true,
            max_iters: 500,
            ..SparseConfig::default()
        };
        let res = ap_sparse(&problem, &config).unwrap();
        let resid = a.apply(&res.x).unwrap();
        assert!(max_err(&resid, &b) <= 1e-8 * norm(&b));
        let trace = res.trace.unwrap();
        for w in trace.windows(2) {
            assert!(w[1].gap_norm <= w[0].gap_norm + 1e-12);
        }
    }
}

#[test]
fn continuous_vectors_have_unique_projection() {
    let mut rng = rng(99);
    for _ in 0..1000 {
        let len = rng.random_range(2..30);
        let s = rng.random_range(1..len);
        let x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        assert!(check_projection_uniqueness(&x, s).unwrap());
    }
}

#[test]
fn null_check_matches_support_enumeration() {
    let mut rng = rng(3);
    for trial in 0..30 {
        let s = 1 + trial % 3;
        let plant = (trial % 2 == 0).then_some(1 + (trial / 2) % 3);
        let a = planted_matrix(6, 12, plant, &mut rng);
        assert_eq!(check_null_intersection(&a, s).unwrap(), !has_sparse_null_vector(&a, s), "trial {trial}");
    }
}

#[test]
fn converges_linearly_near_truth() {
    let mut r = trial_rng(8, 3, 0);
    let (a, x_true) = random_instance(6, 12, 3, Ensemble::Gaussian, &mut r);
    assert!(check_null_intersection(&a, 3).unwrap());
    let b = a.apply(&x_true).unwrap();
    let problem = SparseProblem::new(&a, b.clone(), 3).unwrap();
    let delta: Vec<f64> = (0..12).map(|_| 1e-3 / 12f64.sqrt() * r.sample::<f64, _>(StandardNormal)).collect();
    let guess: Vec<f64> = x_true.iter().zip(&delta).map(|(x, d)| x + d).collect();
    let start = problem.solver().project(&guess, &b).unwrap();
    let config = SparseConfig {
        init: SparseInit::Custom(start),
        tol: 1e-14,
        max_iters: 2000,
        record_trace: true,
        also_step_tol: false,
    };
    let res = ap_sparse_with_truth(&problem, &config, Some(&x_true)).unwrap();
    let errs: Vec<f64> = res.trace.unwrap().iter().map(|r| r.truth_max_err.unwrap()).collect();
    assert!(max_err(&res.x, &x_true) < 1e-8);
    assert!(apkit::completion::estimate_rate(&errs).unwrap() < 1.0);
}

#[test]
fn frequency_is_deterministic_and_collapses_past_n() {
    let first = recovery_frequency(10, 20, &[2, 10], 6, Ensemble::Uniform, 4, 1e-3).unwrap();
    let second = recovery_frequency(10, 20, &[2, 10], 6, Ensemble::Uniform, 4, 1e-3).unwrap();
    assert_eq!(first, second);
    assert!(first[1].frequency <= 0.2);
    let gaussian = recovery_frequency(16, 32, &[16], 8, Ensemble::Gaussian, 1, 1e-3).unwrap();
    assert!(gaussian[0].frequency <= 0.2);
}
