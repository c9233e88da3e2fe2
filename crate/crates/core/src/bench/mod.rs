//! Random problem generators and the experiment runners behind the
//! `bench-*` and `image` subcommands.
//!
//! Every runner is a pure function of its [`ExperimentSpec`]: trial `t` of
//! row `k` draws from its own ChaCha stream, so neither the thread count nor
//! the scheduling order changes the output (apart from timings).

pub mod image;
pub mod io;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::completion::{ap_complete, completion_metrics, CompletionConfig, Init};
use crate::error::{Error, Result};
use crate::linalg::{project_mask, Matrix, ObservationMask};
use crate::sparse::{recovery_frequency_with, Ensemble, RecoveryExperiment, SparseConfig, SuccessCriterion};

use self::io::format_f64;

/// Initializer choice as it appears in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InitKind {
    /// `X_0 = P_Ω(M)`.
    MaskFill,
    /// Rank-one pursuit; `None` means as many steps as the target rank.
    Or1mp(Option<usize>),
}

impl InitKind {
    pub fn to_init(self, rank: usize) -> Init {
        match self {
            InitKind::MaskFill => Init::MaskFill,
            InitKind::Or1mp(steps) => Init::RankOnePursuit {
                steps: steps.unwrap_or(rank),
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitKind::MaskFill => "maskfill",
            InitKind::Or1mp(_) => "or1mp",
        }
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maskfill" | "mask" => Ok(InitKind::MaskFill),
            "or1mp" => Ok(InitKind::Or1mp(None)),
            other => match other.strip_prefix("or1mp:") {
                Some(n) => n
                    .parse()
                    .map(|n| InitKind::Or1mp(Some(n)))
                    .map_err(|_| Error::Parse(format!("bad pursuit step count `{n}`"))),
                None => Err(Error::Parse(format!("unknown initializer `{other}`"))),
            },
        }
    }
}

/// Known-entry count for a missing rate: `ceil((1 - missing_rate) * cells)`,
/// at least one.
pub fn known_count(cells: usize, missing_rate: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::InvalidArgument(format!(
            "missing rate {missing_rate} outside [0, 1)"
        )));
    }
    let known = ((1.0 - missing_rate) * cells as f64 - 1e-9).ceil() as usize;
    Ok(known.clamp(1, cells))
}

/// Uniform mask of [`known_count`] cells drawn without replacement.
pub fn sample_mask(rows: usize, cols: usize, missing_rate: f64, rng: &mut ChaCha8Rng) -> Result<ObservationMask> {
    let cells = rows * cols;
    let known = known_count(cells, missing_rate)?;
    let picks = sample(rng, cells, known);
    ObservationMask::new(rows, cols, picks.into_iter().map(|p| (p / cols, p % cols)))
}

fn generate_with(n: usize, r: usize, missing_rate: f64, rng: &mut ChaCha8Rng) -> Result<(Matrix, ObservationMask)> {
    if n == 0 || r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={n}")));
    }
    let l: Vec<f64> = (0..n * r).map(|_| rng.random()).collect();
    let rt: Vec<f64> = (0..n * r).map(|_| rng.random()).collect();
    let truth = Matrix::from_fn(n, n, |i, j| (0..r).map(|k| l[i * r + k] * rt[j * r + k]).sum());
    let mask = sample_mask(n, n, missing_rate, rng)?;
    Ok((truth, mask))
}

/// `n x n` rank-`r` truth `L R^T` with `U(0, 1)` factors and a uniform mask.
pub fn generate_problem(n: usize, r: usize, missing_rate: f64, seed: u64) -> Result<(Matrix, ObservationMask)> {
    generate_with(n, r, missing_rate, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// The stream used by trial `trial` of table row `row`.
pub fn trial_stream(seed: u64, row: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((row as u64) << 32) | trial as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    TableRun,
    MaxRankSearch,
    SparseFreq,
    ImageRecovery,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "table" | "tablerun" => Ok(ExperimentKind::TableRun),
            "maxrank" | "maxranksearch" => Ok(ExperimentKind::MaxRankSearch),
            "sparse" | "sparsefreq" => Ok(ExperimentKind::SparseFreq),
            "image" | "imagerecovery" => Ok(ExperimentKind::ImageRecovery),
            other => Err(Error::Parse(format!("unknown experiment kind `{other}`"))),
        }
    }
}

/// Success test for [`max_rank_search`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RecoveryCriterion {
    /// `max |X - M| < success_tol`.
    MaxNorm,
    /// `‖X - M‖_F / ‖M‖_F < success_tol`.
    RelFro,
}

impl FromStr for RecoveryCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxnorm" | "max" => Ok(RecoveryCriterion::MaxNorm),
            "relfro" | "fro" => Ok(RecoveryCriterion::RelFro),
            other => Err(Error::Parse(format!("unknown criterion `{other}`"))),
        }
    }
}

/// One experiment. Fields irrelevant to `kind` are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n: usize,
    pub ranks: Vec<usize>,
    pub missing_rates: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub init: InitKind,
    /// Stopping tolerance of the solver.
    pub tol: f64,
    pub max_iters: usize,
    /// Threshold deciding whether a recovery succeeded.
    pub success_tol: f64,
    pub criterion: RecoveryCriterion,
    /// Upper limit for [`max_rank_search`]; `None` means `n`.
    pub max_rank: Option<usize>,
    /// Sparse ambient dimension `N`; `n` is the number of measurements.
    pub big_n: usize,
    pub s_values: Vec<usize>,
    pub ensembles: Vec<Ensemble>,
}

impl ExperimentSpec {
    /// Defaults mirroring the published experiment of each kind.
    pub fn new(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            n: 100,
            ranks: vec![2],
            missing_rates: vec![0.8],
            trials: 20,
            seed: 0,
            init: InitKind::Or1mp(None),
            tol: 1e-6,
            max_iters: 5000,
            success_tol: 1e-3,
            criterion: RecoveryCriterion::MaxNorm,
            max_rank: None,
            big_n: 256,
            s_values: vec![10],
            ensembles: vec![Ensemble::Gaussian, Ensemble::Uniform],
        };
        match kind {
            ExperimentKind::TableRun | ExperimentKind::ImageRecovery => base,
            ExperimentKind::MaxRankSearch => Self {
                missing_rates: vec![0.9],
                trials: 10,
                init: InitKind::MaskFill,
                tol: 1e-5,
                ..base
            },
            ExperimentKind::SparseFreq => Self {
                n: 128,
                trials: 50,
                max_iters: 10_000,
                s_values: (10..=70).step_by(5).collect(),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.tol > 0.0) || !(self.success_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if let Some(mr) = self.missing_rates.iter().find(|m| !(0.0..1.0).contains(*m)) {
            return bad(format!("missing rate {mr} outside [0, 1)"));
        }
        match self.kind {
            ExperimentKind::TableRun => {
                if self.ranks.is_empty() || self.missing_rates.is_empty() {
                    return bad("table needs at least one rank and one missing rate".into());
                }
                if let Some(r) = self.ranks.iter().find(|&&r| r == 0 || r > self.n) {
                    return bad(format!("rank {r} outside 1..={}", self.n));
                }
            }
            ExperimentKind::MaxRankSearch => {
                if self.missing_rates.is_empty() {
                    return bad("search needs at least one missing rate".into());
                }
            }
            ExperimentKind::SparseFreq => {
                if self.n >= self.big_n {
                    return bad(format!("need n < N, got n = {} and N = {}", self.n, self.big_n));
                }
                if self.s_values.is_empty() || self.ensembles.is_empty() {
                    return bad("need at least one sparsity and one ensemble".into());
                }
                if let Some(s) = self.s_values.iter().find(|&&s| s == 0 || s >= self.big_n) {
                    return bad(format!("sparsity {s} outside 1..{}", self.big_n));
                }
            }
            ExperimentKind::ImageRecovery => {}
        }
        Ok(())
    }

    /// Overrides fields from `key = value` pairs; see [`parse_config`].
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "kind" => self.kind = v.parse()?,
                "n" => self.n = parse_num(key, v)?,
                "N" | "big_n" => self.big_n = parse_num(key, v)?,
                "rank" | "ranks" => self.ranks = parse_usize_list(v)?,
                "missing_rate" | "missing_rates" => self.missing_rates = parse_f64_list(v)?,
                "trials" => self.trials = parse_num(key, v)?,
                "seed" => self.seed = parse_num(key, v)?,
                "init" => self.init = v.parse()?,
                "tol" => self.tol = parse_num(key, v)?,
                "max_iters" => self.max_iters = parse_num(key, v)?,
                "success_tol" => self.success_tol = parse_num(key, v)?,
                "criterion" => self.criterion = v.parse()?,
                "max_rank" => self.max_rank = Some(parse_num(key, v)?),
                "s" | "s_values" => self.s_values = parse_usize_list(v)?,
                "ensemble" | "ensembles" => {
                    self.ensembles = if v == "both" {
                        vec![Ensemble::Gaussian, Ensemble::Uniform]
                    } else {
                        v.split(',').map(|e| e.trim().parse()).collect::<Result<_>>()?
                    }
                }
                other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}`: cannot parse `{v}`")))
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// `a,b,c`, `lo:hi` or `lo:hi:step` (inclusive), or a mix separated by commas.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let nums = part
            .split(':')
            .map(|p| parse_num::<usize>("list", p))
            .collect::<Result<Vec<_>>>()?;
        match nums.as_slice() {
            [v] => out.push(*v),
            [lo, hi] => out.extend(*lo..=*hi),
            [_, _, 0] => return Err(Error::Parse(format!("zero step in `{part}`"))),
            [lo, hi, step] => out.extend((*lo..=*hi).step_by(*step)),
            _ => return Err(Error::Parse(format!("bad range `{part}`"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty list".into()));
    }
    Ok(out)
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    let out = text
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_num::<f64>("list", p))
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Parse("empty list".into()));
    }
    Ok(out)
}

/// One `(rank, missing_rate)` row of a completion table, averaged over the
/// trials that produced a result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub rank: usize,
    pub missing_rate: f64,
    pub oversampling_ratio: f64,
    pub mce: f64,
    pub are: f64,
    /// Mean wall-clock seconds per solve, initializer included.
    pub time_s: f64,
    pub seed: u64,
    pub trials: usize,
    pub converged: usize,
    /// Trials that returned an error.
    pub failed: usize,
}

pub const TABLE_HEADER: &str = "rank,missing_rate,oversampling_ratio,mce,are,time_s,seed,trials,converged";

impl TableRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{},{}",
            self.rank,
            self.missing_rate,
            format_f64(self.oversampling_ratio),
            format_f64(self.mce),
            format_f64(self.are),
            self.time_s,
            self.seed,
            self.trials,
            self.converged
        )
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

struct TrialOutcome {
    mce: f64,
    are: f64,
    rel_fro: f64,
    seconds: f64,
    converged: bool,
}

fn completion_trial(spec: &ExperimentSpec, row: usize, trial: usize, r: usize, mr: f64) -> Result<TrialOutcome> {
    let mut rng = trial_stream(spec.seed, row, trial);
    let (truth, mask) = generate_with(spec.n, r, mr, &mut rng)?;
    let observed = project_mask(&truth, &mask)?;
    let config = CompletionConfig::new(r)
        .with_tol(spec.tol)
        .with_max_iters(spec.max_iters)
        .with_init(spec.init.to_init(r));
    let start = Instant::now();
    let result = ap_complete(&observed, &mask, &config)?;
    let seconds = start.elapsed().as_secs_f64();
    let metrics = completion_metrics(&result.x_star, &result.y_star, &truth, &mask, r)?;
    Ok(TrialOutcome {
        mce: metrics.mce,
        are: metrics.are,
        rel_fro: metrics.rel_fro,
        seconds,
        converged: result.converged,
    })
}

/// Runs `trials` seeded problems for each `(rank, missing_rate)` pair.
pub fn run_table(spec: &ExperimentSpec) -> Result<Vec<TableRow>> {
    spec.validate()?;
    let pairs: Vec<(usize, f64)> = spec
        .ranks
        .iter()
        .flat_map(|&r| spec.missing_rates.iter().map(move |&mr| (r, mr)))
        .collect();
    let mut rows = Vec::with_capacity(pairs.len());
    for (row, &(r, mr)) in pairs.iter().enumerate() {
        let outcomes: Vec<Result<TrialOutcome>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| completion_trial(spec, row, t, r, mr))
            .collect();
        let ok: Vec<&TrialOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let mean = |f: fn(&TrialOutcome) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64
            }
        };
        let known = known_count(spec.n * spec.n, mr)?;
        let dim = 2 * spec.n * r - r * r;
        rows.push(TableRow {
            rank: r,
            missing_rate: mr,
            oversampling_ratio: known as f64 / dim as f64,
            mce: mean(|o| o.mce),
            are: mean(|o| o.are),
            time_s: mean(|o| o.seconds),
            seed: spec.seed,
            trials: spec.trials,
            converged: ok.iter().filter(|o| o.converged).count(),
            failed: outcomes.len() - ok.len(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxRankRow {
    pub missing_rate: f64,
    /// Largest rank at which every trial succeeded.
    pub max_rank: Option<usize>,
    pub trials: usize,
    pub seed: u64,
}

pub const MAX_RANK_HEADER: &str = "missing_rate,max_rank,trials,seed";

pub fn max_rank_csv(rows: &[MaxRankRow]) -> String {
    let mut out = format!("{MAX_RANK_HEADER}\n");
    for row in rows {
        let rank = row.max_rank.map_or_else(|| "none".to_string(), |r| r.to_string());
        let _ = writeln!(out, "{},{},{},{}", row.missing_rate, rank, row.trials, row.seed);
    }
    out
}

/// For each missing rate, raises `r` from 1 while all trials recover the
/// truth; ranks whose manifold dimension reaches the sample count are never
/// attempted.
pub fn max_rank_search(spec: &ExperimentSpec) -> Result<Vec<MaxRankRow>> {
    spec.validate()?;
    let cap = spec.max_rank.unwrap_or(spec.n).min(spec.n);
    let mut rows = Vec::new();
    for (idx, &mr) in spec.missing_rates.iter().enumerate() {
        let known = known_count(spec.n * spec.n, mr)?;
        let mut best = None;
        for r in 1..=cap {
            if 2 * spec.n * r - r * r >= known {
                break;
            }
            let row = (idx << 16) | r;
            let all_ok = (0..spec.trials).into_par_iter().all(|t| {
                completion_trial(spec, row, t, r, mr).is_ok_and(|o| match spec.criterion {
                    RecoveryCriterion::MaxNorm => o.mce < spec.success_tol,
                    RecoveryCriterion::RelFro => o.rel_fro < spec.success_tol,
                })
            });
            if !all_ok {
                break;
            }
            best = Some(r);
        }
        rows.push(MaxRankRow {
            missing_rate: mr,
            max_rank: best,
            trials: spec.trials,
            seed: spec.seed,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseFigureRow {
    pub ensemble: Ensemble,
    pub s: usize,
    pub successes: usize,
    pub trials: usize,
    pub frequency: f64,
}

pub const SPARSE_HEADER: &str = "ensemble,s,successes,trials,frequency";

pub fn sparse_csv(rows: &[SparseFigureRow]) -> String {
    let mut out = format!("{SPARSE_HEADER}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.ensemble.name(),
            row.s,
            row.successes,
            row.trials,
            row.frequency
        );
    }
    out
}

/// Recovery frequency curve for every ensemble in the spec. `n x N` sensing
/// matrices; success is `‖x - x_true‖_∞ < success_tol`.
pub fn run_sparse_figure(spec: &ExperimentSpec) -> Result<Vec<SparseFigureRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (k, &ensemble) in spec.ensembles.iter().enumerate() {
        let exp = RecoveryExperiment {
            n: spec.n,
            big_n: spec.big_n,
            s_values: spec.s_values.clone(),
            trials: spec.trials,
            ensemble,
            seed: spec.seed.wrapping_add(k as u64),
            tol: spec.success_tol,
            criterion: SuccessCriterion::MaxNorm,
            solver: SparseConfig {
                tol: spec.tol,
                max_iters: spec.max_iters,
                ..SparseConfig::default()
            },
        };
        for f in recovery_frequency_with(&exp)? {
            rows.push(SparseFigureRow {
                ensemble,
                s: f.s,
                successes: f.successes,
                trials: f.trials,
                frequency: f.frequency,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::numerical_rank;

    #[test]
    fn known_counts() {
        assert_eq!(known_count(100, 0.0).unwrap(), 100);
        assert_eq!(known_count(225, 0.28).unwrap(), 162);
        assert_eq!(known_count(10_000, 0.8).unwrap(), 2000);
        assert_eq!(known_count(10, 0.99).unwrap(), 1);
        assert!(known_count(10, 1.0).is_err());
    }

    #[test]
    fn generator_basics() {
        let (m, mask) = generate_problem(6, 2, 0.0, 1).unwrap();
        assert_eq!(mask.len(), 36);
        assert_eq!(numerical_rank(&m).unwrap(), 2);
        let again = generate_problem(6, 2, 0.0, 1).unwrap();
        assert_eq!(again.0, m);
        assert!(generate_problem(3, 4, 0.5, 1).is_err());
    }

    #[test]
    fn lists_and_config() {
        assert_eq!(parse_usize_list("10:20:5").unwrap(), vec![10, 15, 20]);
        assert_eq!(parse_usize_list("1,3:4").unwrap(), vec![1, 3, 4]);
        assert!(parse_usize_list("1:5:0").is_err());
        assert_eq!(parse_f64_list("0.8, 0.85").unwrap(), vec![0.8, 0.85]);
        let kv = parse_config("# x\nkind = maxrank\nn = 20 # size\ntrials=2\n").unwrap();
        let mut spec = ExperimentSpec::new(ExperimentKind::TableRun);
        spec.apply(&kv).unwrap();
        assert_eq!(spec.kind, ExperimentKind::MaxRankSearch);
        assert_eq!((spec.n, spec.trials), (20, 2));
        assert!(spec.apply(&parse_config("bogus = 1").unwrap()).is_err());
        assert!(parse_config("novalue").is_err());
    }

    #[test]
    fn init_parse() {
        assert_eq!("or1mp".parse::<InitKind>().unwrap(), InitKind::Or1mp(None));
        assert_eq!("or1mp:4".parse::<InitKind>().unwrap(), InitKind::Or1mp(Some(4)));
        assert_eq!("maskfill".parse::<InitKind>().unwrap(), InitKind::MaskFill);
        assert!("svt".parse::<InitKind>().is_err());
    }

    #[test]
    fn full_mask_table_is_exact() {
        let mut spec = ExperimentSpec::new(ExperimentKind::TableRun);
        spec.n = 12;
        spec.missing_rates = vec![0.0];
        spec.trials = 1;
        let rows = run_table(&spec).unwrap();
        assert!(rows[0].mce <= 1e-10);
        assert_eq!(rows[0].converged, 1);
    }

    #[test]
    fn tiny_max_rank_is_none() {
        let mut spec = ExperimentSpec::new(ExperimentKind::MaxRankSearch);
        spec.n = 20;
        spec.missing_rates = vec![0.999];
        spec.trials = 2;
        let rows = max_rank_search(&spec).unwrap();
        assert_eq!(rows[0].max_rank, None);
        assert!(max_rank_csv(&rows).contains("0.999,none,2,0"));
    }

    #[test]
    fn zero_trials_rejected() {
        let mut spec = ExperimentSpec::new(ExperimentKind::SparseFreq);
        spec.trials = 0;
        assert!(run_sparse_figure(&spec).is_err());
    }
}
