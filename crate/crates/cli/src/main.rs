//! `lrcs`: generate instances, decompose observations, run diagnostics and
//! experiments from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 I/O error.
//! Matrices are CSV, structured reports are JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrcs::diagnostics::{
    build_certificate, check_theorem1, incoherence_params, ric_delta, ric_delta_best_c, ric_theta, DEFAULT_TOL_EQ,
};
use lrcs::ensembles::{
    derived_seed, gen_bilinear_lowrank, gen_compression, gen_sparse, synthesize_observation, Amplitude,
    CompressionMode, SparsityMode, Transform,
};
use lrcs::expharness::{phase_grid_parallel, write_results, GridConfig, ResultFormat, SolverChoice};
use lrcs::matcore::DEFAULT_RANK_TOL;
use lrcs::netanomaly::{build_routing, gen_geometric_graph, roc, synthesize_traffic, AnomalyTruth};
use lrcs::solvers::SolverConfig;
use lrcs::{DenseMatrix, Error, Subspaces, SupportSet};
use serde_json::json;

const SEED_ENV: &str = "LRCS_SEED";

#[derive(Parser)]
#[command(name = "lrcs", version, about = "Low-rank plus compressed sparse matrix recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize Y = X0 + R·A0 (+ noise) and write y, r, x0, a0 CSVs.
    Gen(GenArgs),
    /// Decompose Y into low-rank and sparse parts.
    Decompose(DecomposeArgs),
    /// Incoherence, restricted isometry constants and the recovery conditions.
    Diagnose(DiagnoseArgs),
    /// Build and verify the least-norm dual certificate.
    Certify(CertifyArgs),
    /// Run a phase-transition grid from a JSON config.
    PhaseGrid(PhaseGridArgs),
    /// Simulate link traffic with anomalies on a random geometric graph.
    NetSim(NetSimArgs),
    /// ROC curve of anomaly scores against ground truth.
    Roc(RocArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CompressionArg {
    Identity,
    BernoulliSvd,
    Block,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Dct,
    Hadamard,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "rows", short = 'L')]
    l: usize,
    #[arg(long = "flows", short = 'F')]
    f: usize,
    #[arg(long = "time", short = 'T')]
    t: usize,
    #[arg(long)]
    rank: usize,
    /// Bernoulli probability for each entry of A0.
    #[arg(long, conflicts_with = "support", required_unless_present = "support")]
    pi: Option<f64>,
    /// Exact number of nonzeros in A0.
    #[arg(long)]
    support: Option<usize>,
    #[arg(long, value_enum, default_value = "bernoulli-svd")]
    compression: CompressionArg,
    /// Rows per block for `--compression block`.
    #[arg(long, default_value_t = 1)]
    block_rows: usize,
    /// Columns per block for `--compression block`.
    #[arg(long, default_value_t = 1)]
    block_cols: usize,
    #[arg(long, value_enum, default_value = "dct")]
    transform: TransformArg,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix for y.csv, r.csv, x0.csv and a0.csv.
    #[arg(long, default_value = "")]
    out_prefix: String,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    r: PathBuf,
    #[arg(long, default_value = "apg")]
    solver: SolverChoice,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Final continuation level for APG (noisy data).
    #[arg(long)]
    nu_bar: Option<f64>,
    /// Penalty parameter for ADMM.
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    out_x: Option<PathBuf>,
    #[arg(long)]
    out_a: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TruthArgs {
    /// Low-rank component X0 (its row and column spaces are used).
    #[arg(long)]
    x0: PathBuf,
    /// Sparse component A0 (its support and signs are used).
    #[arg(long)]
    a0: PathBuf,
    #[arg(long)]
    r: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    truth: TruthArgs,
    /// RIC normalization; chosen to minimize δ_k when absent.
    #[arg(long)]
    c: Option<f64>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the certificate matrix as CSV.
    #[arg(long)]
    out_gamma: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseGridArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct NetSimArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 0.35)]
    range: f64,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, default_value_t = 0.001)]
    pi: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    time: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix for y.csv, r.csv and truth.csv.
    #[arg(long, default_value = "")]
    out_prefix: String,
}

#[derive(Args)]
struct RocArgs {
    /// Score matrix; entries are ranked by magnitude.
    #[arg(long)]
    scores: PathBuf,
    /// Ground-truth amplitudes; nonzero entries are anomalies.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Lib(Error::Numeric(_) | Error::RankDeficient(_)) => 2,
            Failure::Lib(Error::Io { .. } | Error::Parse { .. }) => 3,
            Failure::Lib(_) => 1,
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Decompose(a) => decompose(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Certify(a) => certify(a),
        Command::PhaseGrid(a) => phase_grid(a),
        Command::NetSim(a) => net_sim(a),
        Command::Roc(a) => roc_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

/// `--seed` wins; otherwise `LRCS_SEED`; otherwise 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(a: GenArgs) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    let mode = match a.compression {
        CompressionArg::Identity => CompressionMode::Identity,
        CompressionArg::BernoulliSvd => CompressionMode::BernoulliSvd,
        CompressionArg::Block => CompressionMode::BlockBounded {
            ell: a.block_rows,
            f: a.block_cols,
            transform: match a.transform {
                TransformArg::Dct => Transform::Dct,
                TransformArg::Hadamard => Transform::Hadamard,
            },
        },
    };
    let sparsity = match (a.pi, a.support) {
        (Some(pi), _) => SparsityMode::Bernoulli(pi),
        (None, Some(s)) => SparsityMode::Uniform(s),
        (None, None) => unreachable!("clap requires one of --pi/--support"),
    };
    let x0 = gen_bilinear_lowrank(a.l, a.t, a.rank, derived_seed(seed, 0))?;
    let (a0, _) = gen_sparse(a.f, a.t, sparsity, Amplitude::Signs, derived_seed(seed, 1))?;
    let r = gen_compression(a.l, a.f, mode, derived_seed(seed, 2))?;
    let truth = synthesize_observation(&x0, &a0, &r, a.noise, derived_seed(seed, 3))?;
    let p = &a.out_prefix;
    truth.y.write_csv(format!("{p}y.csv"))?;
    truth.r.write_csv(format!("{p}r.csv"))?;
    truth.x0.write_csv(format!("{p}x0.csv"))?;
    truth.a0.write_csv(format!("{p}a0.csv"))?;
    Ok(())
}

fn decompose(a: DecomposeArgs) -> CliResult {
    let y = DenseMatrix::read_csv(&a.y)?;
    let r = DenseMatrix::read_csv(&a.r)?;
    let mut cfg = SolverConfig::default();
    cfg.lambda = a.lambda;
    cfg.nu_bar = a.nu_bar;
    if let Some(tol) = a.tol {
        cfg.tol = tol;
    }
    if let Some(n) = a.max_iter {
        cfg.max_iter = n;
    }
    if let Some(c) = a.penalty {
        cfg.penalty_c = c;
    }
    let (d, report) = a.solver.run(&y, &r, &cfg)?;
    if let Some(p) = &a.out_x {
        d.x_hat.write_csv(p)?;
    }
    if let Some(p) = &a.out_a {
        d.a_hat.write_csv(p)?;
    }
    if let Some(p) = &a.report {
        emit_json(&serde_json::to_value(&report).expect("report serializes"), Some(p))?;
    }
    Ok(())
}

struct Truth {
    spaces: Subspaces,
    support: SupportSet,
    a0: DenseMatrix,
    r: DenseMatrix,
}

fn load_truth(t: &TruthArgs) -> Result<Truth, Failure> {
    let x0 = DenseMatrix::read_csv(&t.x0)?;
    let a0 = DenseMatrix::read_csv(&t.a0)?;
    let r = DenseMatrix::read_csv(&t.r)?;
    Ok(Truth {
        spaces: Subspaces::from_matrix(&x0, DEFAULT_RANK_TOL)?,
        support: SupportSet::of_nonzeros(&a0),
        a0,
        r,
    })
}

fn diagnose(a: DiagnoseArgs) -> CliResult {
    let t = load_truth(&a.truth)?;
    let s = t.support.len();
    if s == 0 {
        return Err(Failure::Usage("A0 has no nonzero entries".into()));
    }
    let k = t.support.max_per_row().max(t.support.max_per_col());
    let inc = incoherence_params(&t.spaces, &t.support, &t.r)?;
    let delta_k = match a.c {
        Some(c) => ric_delta(&t.r, k, c)?,
        None => ric_delta_best_c(&t.r, k)?,
    };
    let c = delta_k.c;
    let delta_1 = ric_delta(&t.r, 1, c)?;
    let theta_11 = ric_theta(&t.r, 1, 1, c)?;
    let cond = check_theorem1(&inc, &delta_k, &theta_11, &delta_1, t.spaces.rank(), s, k, c)?;
    let report = json!({
        "rank": t.spaces.rank(),
        "s": s,
        "k": k,
        "incoherence": inc,
        "delta_k": delta_k,
        "delta_1": delta_1,
        "theta_11": theta_11,
        "conditions": cond,
        "lambda_midpoint": cond.lambda_midpoint(),
    });
    emit_json(&report, a.out.as_deref())
}

fn certify(a: CertifyArgs) -> CliResult {
    let t = load_truth(&a.truth)?;
    let signs = t.a0.map(f64::signum);
    let cert = build_certificate(&t.spaces, &t.support, &signs, &t.r, a.lambda)?;
    if let Some(p) = &a.out_gamma {
        cert.gamma_hat.write_csv(p)?;
    }
    let report = json!({
        "c1_residual": cert.c1_residual,
        "c2_residual": cert.c2_residual,
        "c3_value": cert.c3_value,
        "c4_value": cert.c4_value,
        "lambda": cert.lambda,
        "valid": cert.valid,
        "tol_eq": DEFAULT_TOL_EQ,
    });
    emit_json(&report, a.out.as_deref())
}

fn phase_grid(a: PhaseGridArgs) -> CliResult {
    let text = std::fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let cfg: GridConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: invalid grid config: {e}", a.config.display())))?;
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let grid = phase_grid_parallel(&cfg, a.jobs)?;
    let format = match a.format {
        FormatArg::Csv => ResultFormat::Csv,
        FormatArg::Json => ResultFormat::Json,
    };
    write_results(&grid.cells, &a.out, format)?;
    Ok(())
}

fn net_sim(a: NetSimArgs) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    let graph = gen_geometric_graph(a.nodes, a.range, derived_seed(seed, 0), true)?;
    let routing = build_routing(&graph)?;
    let (y, truth, _) = synthesize_traffic(
        &routing,
        a.rank,
        a.pi,
        a.amplitude,
        a.noise,
        a.time,
        derived_seed(seed, 1),
    )?;
    let p = &a.out_prefix;
    y.write_csv(format!("{p}y.csv"))?;
    routing.matrix.write_csv(format!("{p}r.csv"))?;
    truth.amplitudes.write_csv(format!("{p}truth.csv"))?;
    eprintln!(
        "{} nodes, {} links, {} flows, {} anomalies",
        a.nodes,
        routing.link_index.len(),
        routing.flow_index.len(),
        truth.count()
    );
    Ok(())
}

fn roc_cmd(a: RocArgs) -> CliResult {
    let scores = DenseMatrix::read_csv(&a.scores)?.map(f64::abs);
    let truth = AnomalyTruth::from_amplitudes(DenseMatrix::read_csv(&a.truth)?);
    let curve = roc(&scores, &truth)?;
    let text = curve.to_csv();
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    eprintln!("auc {}", curve.auc);
    Ok(())
}
