//! Alternating projections for matrix completion.
//!
//! Each iteration truncates `X_k` to rank `r_g` by SVD (`Y_k`), then resets
//! the observed entries (`X_{k+1}`). The loop stops once
//! `‖X_{k+1} - X_k‖_F < tol`.
//!
//! Because both steps are nearest-point maps, the trace obeys a few exact
//! identities that the tests check on every run:
//!
//! * `‖X_k - Y_k‖` never increases;
//! * `‖X_{k+1} - X_k‖² + ‖X_{k+1} - Y_k‖² = ‖X_k - Y_k‖²`;
//! * `‖X_{k+1} - X_k‖` equals the off-mask part of `X_k - Y_k`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{project_affine_mask, project_mask, svd_truncate, Matrix, ObservationMask};

/// How `X_0` is chosen. Whatever the choice, the observed entries are then
/// written into it so that `X_0` lies in the affine set.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `X_0 = P_Ω(observed)`.
    MaskFill,
    /// Greedy rank-one pursuit with the given number of steps.
    RankOnePursuit { steps: usize },
    Custom(Matrix),
}

#[derive(Clone, Debug)]
pub struct CompletionConfig {
    pub guess_rank: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub init: Init,
    pub record_trace: bool,
}

impl CompletionConfig {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITERS: usize = 5000;

    pub fn new(guess_rank: usize) -> Self {
        Self {
            guess_rank,
            tol: Self::DEFAULT_TOL,
            max_iters: Self::DEFAULT_MAX_ITERS,
            init: Init::MaskFill,
            record_trace: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.guess_rank == 0 || self.guess_rank > rows.min(cols) {
            return Err(Error::InvalidArgument(format!(
                "guess rank {} outside 1..={}",
                self.guess_rank,
                rows.min(cols)
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if let Init::RankOnePursuit { steps: 0 } = self.init {
            return Err(Error::InvalidArgument("rank-one pursuit needs at least one step".into()));
        }
        Ok(())
    }
}

/// Diagnostics of iteration `k`, which maps `X_k` to `X_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    /// `‖X_{k+1} - X_k‖_F`.
    pub step_norm: f64,
    /// `‖X_k - Y_k‖_F`.
    pub gap_norm: f64,
    /// `‖(X_k - Y_k)_{Ω^c}‖_F`.
    pub offmask_gap: f64,
    /// `‖X_{k+1} - Y_k‖_F`, the part of the gap sitting on Ω.
    pub feasibility_gap: f64,
    /// `σ_r(X_k) = σ_{r+1}(X_k)`: the truncation was not unique.
    pub sv_tie: bool,
    /// Max-norm error of `X_{k+1}` against the ground truth, when supplied.
    pub truth_mce: Option<f64>,
    /// Frobenius error of `X_{k+1}` against the ground truth, when supplied.
    pub truth_fro: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CompletionTrace {
    pub rows: Vec<TraceRow>,
}

impl CompletionTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.step_norm).collect()
    }

    pub fn gap_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap_norm).collect()
    }

    /// Frobenius ground-truth errors, if they were recorded.
    pub fn truth_errors(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.truth_fro).collect()
    }

    pub fn any_tie(&self) -> bool {
        self.rows.iter().any(|r| r.sv_tie)
    }

    /// CSV with columns `k,step_norm,gap_norm,offmask_gap,truth_mce,truth_fro`;
    /// missing ground-truth values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,step_norm,gap_norm,offmask_gap,truth_mce,truth_fro\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{},{}",
                r.k,
                r.step_norm,
                r.gap_norm,
                r.offmask_gap,
                opt(r.truth_mce),
                opt(r.truth_fro)
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    /// Final iterate; agrees with the observations on Ω.
    pub x_star: Matrix,
    /// Rank-`r_g` truncation of `x_star`.
    pub y_star: Matrix,
    pub iters: usize,
    pub converged: bool,
    /// Fitted linear rate, from ground-truth errors when available and from
    /// step norms otherwise.
    pub estimated_rate: Option<f64>,
    pub trace: Option<CompletionTrace>,
}

impl CompletionResult {
    /// `‖X* - Y*‖_F`; clearly nonzero at a limit means `r_g` is too small.
    pub fn final_gap(&self) -> f64 {
        self.x_star
            .sub(&self.y_star)
            .map(|d| d.frobenius_norm())
            .unwrap_or(f64::NAN)
    }
}

/// State handed to an observer after each iteration.
pub struct IterationView<'a> {
    pub k: usize,
    pub x: &'a Matrix,
    pub y: &'a Matrix,
    pub x_next: &'a Matrix,
}

pub fn ap_complete(observed: &Matrix, mask: &ObservationMask, config: &CompletionConfig) -> Result<CompletionResult> {
    ap_complete_with(observed, mask, config, None, |_| {})
}

/// [`ap_complete`] that also scores iterates against `truth` (never used by
/// the iteration itself) and calls `observe` after every step.
pub fn ap_complete_with(
    observed: &Matrix,
    mask: &ObservationMask,
    config: &CompletionConfig,
    truth: Option<&Matrix>,
    mut observe: impl FnMut(&IterationView<'_>),
) -> Result<CompletionResult> {
    mask.require_shape(observed, "ap_complete")?;
    if let Some(t) = truth {
        mask.require_shape(t, "ap_complete truth")?;
    }
    config.validate(observed.rows(), observed.cols())?;
    let r = config.guess_rank;

    let start = match &config.init {
        Init::MaskFill => project_mask(observed, mask)?,
        Init::RankOnePursuit { steps } => rank_one_pursuit_init(observed, mask, *steps)?,
        Init::Custom(m) => {
            mask.require_shape(m, "custom init")?;
            m.clone()
        }
    };
    let mut x = project_affine_mask(&start, mask, observed)?;

    let mut rows = Vec::new();
    let mut step_norms = Vec::new();
    let mut truth_errors = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    for k in 0..config.max_iters {
        let (y, factors) = svd_truncate(&x, r)?;
        let x_next = project_affine_mask(&y, mask, observed)?;
        observe(&IterationView {
            k,
            x: &x,
            y: &y,
            x_next: &x_next,
        });

        let step = x_next.sub(&x)?;
        let step_norm = step.frobenius_norm();
        let (truth_mce, truth_fro) = match truth {
            Some(t) => {
                let e = x_next.sub(t)?;
                (Some(e.max_abs()), Some(e.frobenius_norm()))
            }
            None => (None, None),
        };
        if let Some(e) = truth_fro {
            truth_errors.push(e);
        }
        step_norms.push(step_norm);
        if config.record_trace {
            let gap = x.sub(&y)?;
            let mut off = gap.as_dmatrix().clone();
            for &(i, j) in mask.known() {
                off[(i, j)] = 0.0;
            }
            rows.push(TraceRow {
                k,
                step_norm,
                gap_norm: gap.frobenius_norm(),
                offmask_gap: off.norm(),
                feasibility_gap: x_next.sub(&y)?.frobenius_norm(),
                sv_tie: factors.has_tie_at(r),
                truth_mce,
                truth_fro,
            });
        }

        x = x_next;
        iters = k + 1;
        if step_norm < config.tol {
            converged = true;
            break;
        }
    }

    let (y_star, _) = svd_truncate(&x, r)?;
    let rate_source = if truth.is_some() { &truth_errors } else { &step_norms };
    let estimated_rate = estimate_rate(rate_source).ok();
    Ok(CompletionResult {
        x_star: x,
        y_star,
        iters,
        converged,
        estimated_rate,
        trace: config.record_trace.then_some(CompletionTrace { rows }),
    })
}

/// Runs [`ap_complete`] with `r_g = config.guess_rank, …, max_rank`, stopping
/// at the first rank whose limit satisfies `‖X* - Y*‖_F <= gap_tol`.
///
/// Returns the last run attempted.
pub fn ap_complete_escalating(
    observed: &Matrix,
    mask: &ObservationMask,
    config: &CompletionConfig,
    max_rank: usize,
    gap_tol: f64,
) -> Result<CompletionResult> {
    let mut cfg = config.clone();
    loop {
        let result = ap_complete(observed, mask, &cfg)?;
        if result.final_gap() <= gap_tol || cfg.guess_rank >= max_rank {
            return Ok(result);
        }
        cfg.guess_rank += 1;
        if let Init::RankOnePursuit { steps } = &mut cfg.init {
            *steps = (*steps).max(cfg.guess_rank);
        }
    }
}

/// Orthogonal rank-one matrix pursuit.
///
/// Step `k` takes the leading singular pair `(u, v)` of the residual
/// `P_Ω(observed - X)`, appends `u v^T` to the basis, and refits every basis
/// weight by least squares on Ω (minimum-norm solution if the fit is
/// rank-deficient). Stops early if the residual vanishes.
pub fn rank_one_pursuit_init(observed: &Matrix, mask: &ObservationMask, steps: usize) -> Result<Matrix> {
    Ok(rank_one_pursuit(observed, mask, steps)?.0)
}

/// [`rank_one_pursuit_init`] that also returns `‖P_Ω(observed - X_k)‖_F`
/// after each step.
pub fn rank_one_pursuit(observed: &Matrix, mask: &ObservationMask, steps: usize) -> Result<(Matrix, Vec<f64>)> {
    mask.require_shape(observed, "rank_one_pursuit")?;
    if steps == 0 {
        return Err(Error::InvalidArgument("rank-one pursuit needs at least one step".into()));
    }
    let known = mask.known();
    let target = DVector::from_iterator(known.len(), known.iter().map(|&(i, j)| observed[(i, j)]));
    let (rows, cols) = observed.shape();
    let mut bases: Vec<DMatrix<f64>> = Vec::new();
    let mut x = DMatrix::zeros(rows, cols);
    let mut residuals = Vec::with_capacity(steps);

    for _ in 0..steps {
        let mut residual = DMatrix::zeros(rows, cols);
        for &(i, j) in known {
            residual[(i, j)] = observed[(i, j)] - x[(i, j)];
        }
        let (u, sigma, v) = crate::linalg::svd_dmatrix(&residual)?;
        if sigma[0] == 0.0 {
            break;
        }
        bases.push(u.column(0) * v.column(0).transpose());

        let design = DMatrix::from_fn(known.len(), bases.len(), |p, q| {
            let (i, j) = known[p];
            bases[q][(i, j)]
        });
        let weights = crate::linalg::lstsq_min_norm(&design, &target)?;

        x.fill(0.0);
        for (w, b) in weights.iter().zip(&bases) {
            x += b * *w;
        }
        let res = known
            .iter()
            .enumerate()
            .map(|(p, &(i, j))| (target[p] - x[(i, j)]).powi(2))
            .sum::<f64>()
            .sqrt();
        residuals.push(res);
        if res == 0.0 {
            break;
        }
    }
    Ok((Matrix::from_dmatrix(x)?, residuals))
}

/// Errors at or below this are ignored by [`estimate_rate`].
pub const RATE_FLOOR: f64 = 1e-13;
/// Minimum number of points [`estimate_rate`] fits.
pub const RATE_MIN_POINTS: usize = 10;

/// Linear convergence factor `c` fitted to an error sequence.
///
/// Keeps errors above [`RATE_FLOOR`], takes the final third of them (but at
/// least [`RATE_MIN_POINTS`]), fits `log(error)` against `k` by least squares
/// and returns `exp(slope)`.
pub fn estimate_rate(errors: &[f64]) -> Result<f64> {
    let points: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > RATE_FLOOR && e.is_finite())
        .map(|(k, &e)| (k as f64, e.ln()))
        .collect();
    if points.len() < RATE_MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points above {RATE_FLOOR:e}, need {RATE_MIN_POINTS}",
            points.len()
        )));
    }
    let take = (points.len() / 3).max(RATE_MIN_POINTS);
    let tail = &points[points.len() - take..];
    let n = tail.len() as f64;
    let mean_k = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_e = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(k, e) in tail {
        sxy += (k - mean_k) * (e - mean_e);
        sxx += (k - mean_k) * (k - mean_k);
    }
    Ok((sxy / sxx).exp())
}

/// Error summary of a completed matrix against its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    /// `max |X - truth|`.
    pub mce: f64,
    /// `‖P_Ω(Y) - P_Ω(truth)‖_F / ‖P_Ω(truth)‖_F`.
    pub are: f64,
    /// `m / (r (rows + cols) - r²)`.
    pub or_ratio: f64,
    /// Fraction of unknown entries.
    pub missing_rate: f64,
    /// `‖X - truth‖_F / ‖truth‖_F`.
    pub rel_fro: f64,
}

/// Metrics of a completion `x` and its low-rank partner `y`.
pub fn completion_metrics(
    x: &Matrix,
    y: &Matrix,
    truth: &Matrix,
    mask: &ObservationMask,
    r: usize,
) -> Result<MetricsRecord> {
    mask.require_shape(x, "completion_metrics")?;
    mask.require_shape(y, "completion_metrics")?;
    mask.require_shape(truth, "completion_metrics")?;
    let diff = x.sub(truth)?;
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, j) in mask.known() {
        num += (y[(i, j)] - truth[(i, j)]).powi(2);
        den += truth[(i, j)].powi(2);
    }
    let ratio = |a: f64, b: f64| if b == 0.0 { if a == 0.0 { 0.0 } else { f64::INFINITY } } else { a / b };
    let dim = r * (x.rows() + x.cols()) - r * r;
    Ok(MetricsRecord {
        mce: diff.max_abs(),
        are: ratio(num.sqrt(), den.sqrt()),
        or_ratio: mask.len() as f64 / dim as f64,
        missing_rate: mask.missing_rate(),
        rel_fro: ratio(diff.frobenius_norm(), truth.frobenius_norm()),
    })
}

/// `(‖Y (X - Y)^T‖_F, ‖Y^T (X - Y)‖_F)`; both vanish at a limit pair.
pub fn fixed_point_residuals(x_star: &Matrix, y_star: &Matrix) -> Result<(f64, f64)> {
    let d = x_star.sub(y_star)?;
    let y = y_star.as_dmatrix();
    let d = d.as_dmatrix();
    Ok(((y * d.transpose()).norm(), (y.tr_mul(d)).norm()))
}
