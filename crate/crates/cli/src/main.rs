use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apkit::bench::image::{image_recover, synthetic_low_rank_image, GrayImage, ImageJob, ImageSource};
use apkit::bench::io::{read_mask_csv, read_matrix_csv, read_vector, write_matrix_csv, write_vector};
use apkit::bench::{
    max_rank_csv, max_rank_search, parse_config, run_sparse_figure, run_table, sparse_csv, table_csv, ExperimentKind,
    ExperimentSpec, InitKind,
};
use apkit::completion::{ap_complete_with, CompletionConfig};
use apkit::existence::existence_report;
use apkit::linalg::{svd_truncate, Matrix, ObservationMask};
use apkit::sparse::{ap_sparse, SparseConfig, SparseInit, SparseProblem};
use apkit::tangent::transversality_report;
use apkit::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "apkit", version, about = "Alternating projections for matrix completion and sparse recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a partially observed matrix.
    Complete(CompleteArgs),
    /// Recover a sparse vector from linear measurements.
    Sparse(SparseArgs),
    /// Transversality report for a matrix and mask.
    Diagnose(DiagnoseArgs),
    /// Dimension count and degree bound.
    Existence(ExistenceArgs),
    /// Completion accuracy table over ranks and missing rates.
    BenchTable(TableArgs),
    /// Largest recoverable rank per missing rate.
    BenchMaxrank(MaxRankArgs),
    /// Sparse recovery frequency curve.
    #[command(alias = "sparse-bench")]
    BenchSparse(SparseBenchArgs),
    /// Image completion from a fraction of its pixels.
    Image(ImageArgs),
}

#[derive(Args)]
struct CompleteArgs {
    /// Matrix CSV; unobserved entries may hold anything.
    #[arg(long)]
    observed: PathBuf,
    /// 1-based `i,j` list; defaults to the nonzero entries of the observed matrix.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// `maskfill`, `or1mp` or `or1mp:<steps>`.
    #[arg(long, default_value = "maskfill")]
    init: String,
    /// Ground truth for the trace's error columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Retry with larger ranks up to this one while the final gap exceeds `--gap-tol`.
    #[arg(long)]
    escalate_to: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SparseArgs {
    #[arg(long = "A")]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// `minnorm` or `random:<seed>`.
    #[arg(long, default_value = "minnorm")]
    init: String,
    #[arg(long)]
    also_step_tol: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Replace the matrix by its best rank-r approximation first.
    #[arg(long)]
    snap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExistenceArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    m: usize,
}

#[derive(Args)]
struct CommonBench {
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Solver stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: CommonBench,
    #[arg(long)]
    n: Option<usize>,
    /// Ranks, e.g. `2,5,10` or `1:5`.
    #[arg(long)]
    rank: Option<String>,
    /// Comma-separated missing rates.
    #[arg(long)]
    missing_rate: Option<String>,
    #[arg(long)]
    init: Option<String>,
}

#[derive(Args)]
struct MaxRankArgs {
    #[command(flatten)]
    common: CommonBench,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    missing_rate: Option<String>,
    #[arg(long)]
    success_tol: Option<f64>,
    /// `maxnorm` or `relfro`.
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    max_rank: Option<usize>,
}

#[derive(Args)]
struct SparseBenchArgs {
    #[command(flatten)]
    common: CommonBench,
    /// Number of measurements.
    #[arg(long)]
    n: Option<usize>,
    /// Signal length.
    #[arg(long = "N")]
    big_n: Option<usize>,
    /// Sparsities, e.g. `10:70:5`.
    #[arg(long)]
    s: Option<String>,
    /// `gaussian`, `uniform` or `both`.
    #[arg(long)]
    ensemble: Option<String>,
    /// Max-norm error below which a trial counts as a recovery.
    #[arg(long)]
    success_tol: Option<f64>,
}

#[derive(Args)]
struct ImageArgs {
    /// P2 or P5 grayscale file.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate a `ROWSxCOLS` low-rank image instead of reading one.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 25)]
    synthetic_rank: usize,
    #[arg(long)]
    missing_rate: f64,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value = "maskfill")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long)]
    masked_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn emit(text: &str, out: Option<&Path>) -> apkit::Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values always serialize") + "\n"
}

fn load_mask(path: Option<&Path>, observed: &Matrix) -> apkit::Result<ObservationMask> {
    match path {
        Some(p) => read_mask_csv(p, observed.rows(), observed.cols()),
        None => ObservationMask::nonzero_of(observed),
    }
}

fn complete(args: CompleteArgs) -> apkit::Result<()> {
    let observed = read_matrix_csv(&args.observed)?;
    let mask = load_mask(args.mask.as_deref(), &observed)?;
    let truth = args.truth.as_deref().map(read_matrix_csv).transpose()?;
    let init: InitKind = args.init.parse()?;
    let max_rank = args.escalate_to.unwrap_or(args.rank);
    if max_rank < args.rank {
        return Err(invalid("--escalate-to must be at least --rank"));
    }
    let mut rank = args.rank;
    let result = loop {
        let config = CompletionConfig::new(rank)
            .with_tol(args.tol)
            .with_max_iters(args.max_iters)
            .with_init(init.to_init(rank))
            .with_trace(args.trace.is_some());
        let result = ap_complete_with(&observed, &mask, &config, truth.as_ref(), |_| {})?;
        if rank >= max_rank || result.final_gap() <= args.gap_tol {
            break result;
        }
        rank += 1;
    };
    if let (Some(path), Some(trace)) = (&args.trace, &result.trace) {
        fs::write(path, trace.to_csv())?;
    }
    if let Some(path) = &args.out {
        write_matrix_csv(path, &result.x_star)?;
    }
    emit(
        &json_line(&json!({
            "rank": rank,
            "iters": result.iters,
            "converged": result.converged,
            "estimated_rate": result.estimated_rate,
            "final_gap": result.final_gap(),
        })),
        None,
    )
}

fn sparse(args: SparseArgs) -> apkit::Result<()> {
    let a = read_matrix_csv(&args.a)?;
    let b = read_vector(&args.b)?;
    let problem = SparseProblem::new(&a, b, args.s)?;
    let init = match args.init.as_str() {
        "minnorm" => SparseInit::MinNorm,
        other => match other.strip_prefix("random:").map(str::parse::<u64>) {
            Some(Ok(seed)) => SparseInit::SeededRandomFeasible(seed),
            _ => return Err(Error::Parse(format!("unknown initializer `{other}`"))),
        },
    };
    let config = SparseConfig {
        tol: args.tol,
        max_iters: args.max_iters,
        init,
        also_step_tol: args.also_step_tol,
        record_trace: false,
    };
    let result = ap_sparse(&problem, &config)?;
    if let Some(path) = &args.out {
        write_vector(path, &result.x)?;
    }
    emit(
        &json_line(&json!({
            "iters": result.iters,
            "converged": result.converged,
            "support": result.support,
            "tie_flag": result.tie_flag,
        })),
        None,
    )
}

fn diagnose(args: DiagnoseArgs) -> apkit::Result<()> {
    let mut m = read_matrix_csv(&args.matrix)?;
    if args.snap {
        m = svd_truncate(&m, args.rank)?.0;
    }
    let mask = read_mask_csv(&args.mask, m.rows(), m.cols())?;
    let report = transversality_report(&m, &mask, args.rank)?;
    let value = serde_json::to_value(&report).map_err(|e| invalid(e.to_string()))?;
    emit(&json_line(&value), args.out.as_deref())
}

fn existence(args: ExistenceArgs) -> apkit::Result<()> {
    let report = existence_report(args.n, args.r, args.m)?;
    let value = serde_json::to_value(&report).map_err(|e| invalid(e.to_string()))?;
    emit(&json_line(&value), None)
}

fn bench_spec(kind: ExperimentKind, common: &CommonBench, flags: BTreeMap<String, String>) -> apkit::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(kind);
    if let Some(path) = &common.config {
        let mut pairs = parse_config(&fs::read_to_string(path)?)?;
        if let Some(k) = pairs.remove("kind") {
            if k.parse::<ExperimentKind>()? != kind {
                return Err(invalid(format!("config describes a `{k}` experiment")));
            }
        }
        spec.apply(&pairs)?;
    }
    let mut pairs = flags;
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.insert(k.to_string(), v);
        }
    };
    put("trials", common.trials.map(|v| v.to_string()));
    put("seed", common.seed.map(|v| v.to_string()));
    put("tol", common.tol.map(|v| v.to_string()));
    put("max_iters", common.max_iters.map(|v| v.to_string()));
    spec.apply(&pairs)?;
    spec.validate()?;
    Ok(spec)
}

fn flag_map(entries: &[(&str, Option<String>)]) -> BTreeMap<String, String> {
    entries
        .iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect()
}

fn bench_table(args: TableArgs) -> apkit::Result<()> {
    let flags = flag_map(&[
        ("n", args.n.map(|v| v.to_string())),
        ("ranks", args.rank),
        ("missing_rates", args.missing_rate),
        ("init", args.init),
    ]);
    let spec = bench_spec(ExperimentKind::TableRun, &args.common, flags)?;
    emit(&table_csv(&run_table(&spec)?), args.common.out.as_deref())
}

fn bench_maxrank(args: MaxRankArgs) -> apkit::Result<()> {
    let flags = flag_map(&[
        ("n", args.n.map(|v| v.to_string())),
        ("missing_rates", args.missing_rate),
        ("success_tol", args.success_tol.map(|v| v.to_string())),
        ("criterion", args.criterion),
        ("init", args.init),
        ("max_rank", args.max_rank.map(|v| v.to_string())),
    ]);
    let spec = bench_spec(ExperimentKind::MaxRankSearch, &args.common, flags)?;
    emit(&max_rank_csv(&max_rank_search(&spec)?), args.common.out.as_deref())
}

fn bench_sparse(args: SparseBenchArgs) -> apkit::Result<()> {
    let flags = flag_map(&[
        ("n", args.n.map(|v| v.to_string())),
        ("big_n", args.big_n.map(|v| v.to_string())),
        ("s_values", args.s),
        ("ensembles", args.ensemble),
        ("success_tol", args.success_tol.map(|v| v.to_string())),
    ]);
    let spec = bench_spec(ExperimentKind::SparseFreq, &args.common, flags)?;
    emit(&sparse_csv(&run_sparse_figure(&spec)?), args.common.out.as_deref())
}

fn parse_dims(text: &str) -> apkit::Result<(usize, usize)> {
    let (r, c) = text
        .split_once('x')
        .ok_or_else(|| Error::Parse(format!("expected ROWSxCOLS, got `{text}`")))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad size `{text}`")));
    Ok((num(r)?, num(c)?))
}

fn image(args: ImageArgs) -> apkit::Result<()> {
    let source = match (&args.input, &args.synthetic) {
        (Some(path), _) => ImageSource::Pgm(path.clone()),
        (None, Some(dims)) => {
            let (rows, cols) = parse_dims(dims)?;
            if rows == 0 || cols == 0 || args.synthetic_rank == 0 {
                return Err(invalid("synthetic image needs positive size and rank"));
            }
            ImageSource::Pixels(GrayImage {
                pixels: synthetic_low_rank_image(rows, cols, args.synthetic_rank, args.seed),
                maxval: 255,
            })
        }
        (None, None) => return Err(invalid("give --input or --synthetic")),
    };
    let job = ImageJob {
        init: args.init.parse()?,
        seed: args.seed,
        tol: args.tol,
        max_iters: args.max_iters,
        masked_out: args.masked_out,
        recovered_out: args.out,
        ..ImageJob::new(source, args.missing_rate, args.rank)
    };
    let out = image_recover(&job)?;
    emit(
        &json_line(&json!({
            "rmse": out.rmse,
            "rmse_quantized": out.rmse_quantized,
            "iters": out.iters,
            "converged": out.converged,
        })),
        None,
    )
}

fn run(cli: Cli) -> apkit::Result<()> {
    match cli.command {
        Command::Complete(a) => complete(a),
        Command::Sparse(a) => sparse(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Existence(a) => existence(a),
        Command::BenchTable(a) => bench_table(a),
        Command::BenchMaxrank(a) => bench_maxrank(a),
        Command::BenchSparse(a) => bench_sparse(a),
        Command::Image(a) => image(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
