//! Alternating projections for ℓ0-constrained sparse recovery.
//!
//! Iterates `y_k = H_s(x_k)` (keep the `s` largest entries) and
//! `x_{k+1} = P_A(y_k)` (nearest solution of `A x = b`). The iteration
//! stops once the `N - s` smallest entries of `x_{k+1}` are below `tol`.

use std::str::FromStr;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{count_above, hard_threshold_with_ties, standard_rank_threshold, svd_dmatrix, AffineSolver, Matrix};

/// `A x = b` with a sparsity budget `s`.
#[derive(Clone, Debug)]
pub struct SparseProblem {
    solver: AffineSolver,
    b: Vec<f64>,
    s: usize,
}

impl SparseProblem {
    /// Validates shapes, `1 <= s < N`, `n < N` and full row rank of `A`.
    pub fn new(a: &Matrix, b: Vec<f64>, s: usize) -> Result<Self> {
        let (n, big_n) = a.shape();
        if n >= big_n {
            return Err(Error::Dimension(format!(
                "sensing matrix must be wide, got {n}x{big_n}"
            )));
        }
        if b.len() != n {
            return Err(Error::Dimension(format!(
                "measurement has length {}, expected {n}",
                b.len()
            )));
        }
        if s == 0 || s >= big_n {
            return Err(Error::InvalidArgument(format!("sparsity {s} outside 1..{big_n}")));
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self {
            solver: AffineSolver::new(a)?,
            b,
            s,
        })
    }

    pub fn a(&self) -> &Matrix {
        self.solver.matrix()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Ambient dimension `N`.
    pub fn len(&self) -> usize {
        self.solver.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn solver(&self) -> &AffineSolver {
        &self.solver
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SparseInit {
    /// `x_0 = A^T (A A^T)^{-1} b`.
    MinNorm,
    Custom(Vec<f64>),
    /// Least-norm solution plus a Gaussian null-space component drawn from
    /// the given seed.
    SeededRandomFeasible(u64),
}

#[derive(Clone, Debug)]
pub struct SparseConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub init: SparseInit,
    /// Additionally require `‖x_{k+1} - x_k‖ < tol` before stopping.
    pub also_step_tol: bool,
    pub record_trace: bool,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 10_000,
            init: SparseInit::MinNorm,
            also_step_tol: false,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseTraceRow {
    pub k: usize,
    /// `‖x_{k+1} - x_k‖`.
    pub step_norm: f64,
    /// `‖x_k - y_k‖`.
    pub gap_norm: f64,
    /// Support of `y_k` differs from that of `y_{k-1}`.
    pub support_changed: bool,
    pub tie: bool,
    /// `‖x_{k+1} - x_true‖_∞`, when a reference solution was supplied.
    pub truth_max_err: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SparseResult {
    pub x: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Indices of the `s` largest-magnitude entries of `x`, ascending.
    pub support: Vec<usize>,
    /// Some thresholding step had to break a tie by index.
    pub tie_flag: bool,
    /// First iteration from which the thresholded support never changed.
    pub support_stable_from: usize,
    pub trace: Option<Vec<SparseTraceRow>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `(s+1)`-th largest magnitude, i.e. the largest of the `N - s` smallest.
fn tail_magnitude(x: &[f64], s: usize) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.get(s).copied().unwrap_or(0.0)
}

fn initial_point(problem: &SparseProblem, init: &SparseInit) -> Result<Vec<f64>> {
    match init {
        SparseInit::MinNorm => problem.solver.min_norm_solution(&problem.b),
        SparseInit::Custom(x) => {
            if x.len() != problem.len() {
                return Err(Error::Dimension(format!(
                    "initial point has length {}, expected {}",
                    x.len(),
                    problem.len()
                )));
            }
            Ok(x.clone())
        }
        SparseInit::SeededRandomFeasible(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let z: Vec<f64> = (0..problem.len()).map(|_| rng.sample(StandardNormal)).collect();
            let base = problem.solver.min_norm_solution(&problem.b)?;
            let null = problem.solver.null_space_part(&z)?;
            Ok(base.iter().zip(&null).map(|(a, b)| a + b).collect())
        }
    }
}

pub fn ap_sparse(problem: &SparseProblem, config: &SparseConfig) -> Result<SparseResult> {
    ap_sparse_with_truth(problem, config, None)
}

/// [`ap_sparse`] that records the max-norm distance to `truth` in the trace.
pub fn ap_sparse_with_truth(problem: &SparseProblem, config: &SparseConfig, truth: Option<&[f64]>) -> Result<SparseResult> {
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", config.tol)));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be positive".into()));
    }
    if let Some(t) = truth {
        if t.len() != problem.len() {
            return Err(Error::Dimension("reference solution has the wrong length".into()));
        }
    }
    let s = problem.s;
    let mut x = initial_point(problem, &config.init)?;
    let mut trace = Vec::new();
    let mut tie_flag = false;
    let mut converged = false;
    let mut iters = 0;
    let mut last_support: Option<Vec<usize>> = None;
    let mut support_stable_from = 0;

    for k in 0..config.max_iters {
        let thresholded = hard_threshold_with_ties(&x, s)?;
        tie_flag |= thresholded.tie;
        let support_changed = last_support.as_ref() != Some(&thresholded.support);
        if support_changed {
            support_stable_from = k;
        }
        let x_next = problem.solver.project(&thresholded.values, &problem.b)?;
        let step_norm = dist(&x_next, &x);
        if config.record_trace {
            trace.push(SparseTraceRow {
                k,
                step_norm,
                gap_norm: dist(&x, &thresholded.values),
                support_changed,
                tie: thresholded.tie,
                truth_max_err: truth.map(|t| {
                    x_next
                        .iter()
                        .zip(t)
                        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                }),
            });
        }
        last_support = Some(thresholded.support);
        x = x_next;
        iters = k + 1;
        let small = tail_magnitude(&x, s) < config.tol;
        if small && (!config.also_step_tol || step_norm < config.tol) {
            converged = true;
            break;
        }
    }

    let final_support = hard_threshold_with_ties(&x, s)?;
    tie_flag |= final_support.tie;
    Ok(SparseResult {
        x,
        iters,
        converged,
        support: final_support.support,
        tie_flag,
        support_stable_from,
        trace: config.record_trace.then_some(trace),
    })
}

/// Largest number of supports the exhaustive check will enumerate.
pub const NULL_CHECK_BUDGET: u128 = 2_000_000;
/// Largest `N` accepted by the exhaustive check.
pub const NULL_CHECK_MAX_COLS: usize = 24;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn columns_independent(a: &DMatrix<f64>, cols: &[usize]) -> Result<bool> {
    if cols.len() > a.nrows() {
        return Ok(false);
    }
    let sub = a.select_columns(cols);
    let (_, sigma, _) = svd_dmatrix(&sub)?;
    let rank = count_above(&sigma, standard_rank_threshold(sub.nrows(), sub.ncols(), sigma[0]));
    Ok(rank == cols.len())
}

fn check_sparsity(a: &Matrix, s: usize) -> Result<()> {
    if s == 0 || s > a.cols() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} outside 1..={}",
            a.cols()
        )));
    }
    Ok(())
}

/// Whether no nonzero vector with at most `s` nonzeros lies in `Null(A)`,
/// i.e. every set of `s` columns of `A` is linearly independent.
///
/// Exhaustive over all supports; refuses instances beyond
/// [`NULL_CHECK_MAX_COLS`] columns or [`NULL_CHECK_BUDGET`] supports.
pub fn check_null_intersection(a: &Matrix, s: usize) -> Result<bool> {
    check_sparsity(a, s)?;
    let big_n = a.cols();
    let count = binomial(big_n, s);
    if big_n > NULL_CHECK_MAX_COLS || count > NULL_CHECK_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "N = {big_n}, C(N, s) = {count}"
        )));
    }
    let dense = a.as_dmatrix();
    for cols in (0..big_n).combinations(s) {
        if !columns_independent(dense, &cols)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Verdict of [`check_null_intersection_sampled`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NullCheck {
    /// Every sampled support had independent columns.
    ProbablyTrue,
    /// A dependent support was found.
    False { support: Vec<usize> },
}

/// Randomized variant of [`check_null_intersection`] over `samples`
/// uniformly drawn supports.
pub fn check_null_intersection_sampled(a: &Matrix, s: usize, samples: usize, seed: u64) -> Result<NullCheck> {
    check_sparsity(a, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = a.as_dmatrix();
    for _ in 0..samples {
        let mut cols = sample(&mut rng, a.cols(), s).into_vec();
        cols.sort_unstable();
        if !columns_independent(dense, &cols)? {
            return Ok(NullCheck::False { support: cols });
        }
    }
    Ok(NullCheck::ProbablyTrue)
}

/// Whether the `s`-th and `(s+1)`-th largest magnitudes of `x` differ, so
/// hard thresholding at `s` is single-valued.
pub fn check_projection_uniqueness(x: &[f64], s: usize) -> Result<bool> {
    if s == 0 || s >= x.len() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} outside 1..{}",
            x.len()
        )));
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(mags[s - 1] != mags[s])
}

/// Entry distribution of random sensing matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    /// i.i.d. N(0, 1).
    Gaussian,
    /// i.i.d. U(0, 1).
    Uniform,
}

impl Ensemble {
    pub fn name(self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Uniform => "uniform",
        }
    }
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Ensemble::Gaussian),
            "uniform" => Ok(Ensemble::Uniform),
            other => Err(Error::Parse(format!("unknown ensemble `{other}`"))),
        }
    }
}

/// How a recovery trial is judged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuccessCriterion {
    /// `‖x - x_true‖_∞ < tol`.
    MaxNorm,
    /// `‖x - x_true‖_2 / ‖x_true‖_2 < tol`.
    RelativeL2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub s: usize,
    pub successes: usize,
    pub trials: usize,
    pub frequency: f64,
}

/// Options for [`recovery_frequency_with`].
#[derive(Clone, Debug)]
pub struct RecoveryExperiment {
    pub n: usize,
    pub big_n: usize,
    pub s_values: Vec<usize>,
    pub trials: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
    pub tol: f64,
    pub criterion: SuccessCriterion,
    pub solver: SparseConfig,
}

/// Random stream for trial `trial` at sparsity `s`; independent of how
/// trials are scheduled.
pub fn trial_rng(seed: u64, s: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((s as u64) << 32) | trial as u64);
    rng
}

/// Draws a sensing matrix and an `s`-sparse signal with Gaussian nonzeros on
/// a uniformly random support.
pub fn random_instance(n: usize, big_n: usize, s: usize, ensemble: Ensemble, rng: &mut ChaCha8Rng) -> (Matrix, Vec<f64>) {
    let a = Matrix::from_fn(n, big_n, |_, _| match ensemble {
        Ensemble::Gaussian => rng.sample(StandardNormal),
        Ensemble::Uniform => rng.random::<f64>(),
    });
    let mut x = vec![0.0; big_n];
    for i in sample(rng, big_n, s.min(big_n)).into_iter() {
        x[i] = rng.sample(StandardNormal);
    }
    (a, x)
}

fn run_trial(exp: &RecoveryExperiment, s: usize, trial: usize) -> Result<bool> {
    let mut rng = trial_rng(exp.seed, s, trial);
    let (a, x_true) = random_instance(exp.n, exp.big_n, s, exp.ensemble, &mut rng);
    let b = a.apply(&x_true)?;
    let problem = SparseProblem::new(&a, b, s)?;
    let result = ap_sparse(&problem, &exp.solver)?;
    Ok(match exp.criterion {
        SuccessCriterion::MaxNorm => {
            x_true
                .iter()
                .zip(&result.x)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                < exp.tol
        }
        SuccessCriterion::RelativeL2 => dist(&result.x, &x_true) < exp.tol * norm(&x_true),
    })
}

/// Success fraction of [`ap_sparse`] on random instances for each sparsity.
pub fn recovery_frequency_with(exp: &RecoveryExperiment) -> Result<Vec<FrequencyRow>> {
    if exp.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    exp.s_values
        .iter()
        .map(|&s| {
            let outcomes: Vec<bool> = (0..exp.trials)
                .into_par_iter()
                .map(|t| run_trial(exp, s, t))
                .collect::<Result<_>>()?;
            let successes = outcomes.iter().filter(|&&ok| ok).count();
            Ok(FrequencyRow {
                s,
                successes,
                trials: exp.trials,
                frequency: successes as f64 / exp.trials as f64,
            })
        })
        .collect()
}

/// [`recovery_frequency_with`] using the max-norm criterion and default
/// solver settings.
pub fn recovery_frequency(
    n: usize,
    big_n: usize,
    s_values: &[usize],
    trials: usize,
    ensemble: Ensemble,
    seed: u64,
    tol: f64,
) -> Result<Vec<FrequencyRow>> {
    recovery_frequency_with(&RecoveryExperiment {
        n,
        big_n,
        s_values: s_values.to_vec(),
        trials,
        ensemble,
        seed,
        tol,
        criterion: SuccessCriterion::MaxNorm,
        solver: SparseConfig::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniqueness_cases() {
        assert!(check_projection_uniqueness(&[3.0, 2.0, 1.0], 1).unwrap());
        assert!(!check_projection_uniqueness(&[1.0, -1.0, 0.0], 1).unwrap());
        assert!(check_projection_uniqueness(&[1.0], 1).is_err());
    }

    #[test]
    fn null_intersection_small() {
        assert!(check_null_intersection(&Matrix::identity(2), 1).unwrap());
        let a = Matrix::from_rows(&[[1.0, 1.0, 2.0], [0.0, 1.0, 1.0]]).unwrap();
        assert!(check_null_intersection(&a, 2).unwrap());
        let dup = Matrix::from_rows(&[[1.0, 1.0, 2.0, 2.0], [0.0, 1.0, 1.0, 1.0]]).unwrap();
        assert!(!check_null_intersection(&dup, 2).unwrap());
        assert!(matches!(check_null_intersection(&a, 0), Err(Error::InvalidArgument(_))));
        // more columns than rows can never be independent
        assert!(!check_null_intersection(&a, 3).unwrap());
    }

    #[test]
    fn budget_is_enforced() {
        let a = Matrix::from_fn(3, 30, |i, j| ((i + 1) * (j + 2)) as f64);
        assert!(matches!(check_null_intersection(&a, 2), Err(Error::BudgetExceeded(_))));
        let dup = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            check_null_intersection_sampled(&dup, 2, 200, 1).unwrap(),
            NullCheck::False { .. }
        ));
    }

    #[test]
    fn problem_validation() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        assert!(SparseProblem::new(&a, vec![1.0, 1.0], 0).is_err());
        assert!(SparseProblem::new(&a, vec![1.0, 1.0], 3).is_err());
        assert!(SparseProblem::new(&a, vec![1.0], 1).is_err());
        assert!(SparseProblem::new(&a.transpose(), vec![1.0; 3], 1).is_err());
        assert!(SparseProblem::new(&a, vec![1.0, 1.0], 1).is_ok());
    }

    #[test]
    fn fixed_point_in_one_iteration() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 0.5, -1.0], [0.0, 1.0, 3.0, 1.0]]).unwrap();
        let x_true = vec![0.0, 2.0, 0.0, 0.0];
        let b = a.apply(&x_true).unwrap();
        let problem = SparseProblem::new(&a, b, 1).unwrap();
        let cfg = SparseConfig {
            init: SparseInit::Custom(x_true.clone()),
            ..SparseConfig::default()
        };
        let res = ap_sparse(&problem, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.iters, 1);
        assert_eq!(res.support, vec![1]);
        assert!(dist(&res.x, &x_true) < 1e-12);
    }

    #[test]
    fn ensemble_parse() {
        assert_eq!("Gaussian".parse::<Ensemble>().unwrap(), Ensemble::Gaussian);
        assert_eq!("uniform".parse::<Ensemble>().unwrap(), Ensemble::Uniform);
        assert!("cauchy".parse::<Ensemble>().is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(recovery_frequency(4, 8, &[1], 0, Ensemble::Gaussian, 1, 1e-3).is_err());
    }
}
