//! Batch experiments: recovery phase grids over (rank, sparsity), the
//! compression-ratio sweep, the LS-PCP comparison, and result files.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ensembles::{
    derived_seed, gen_bilinear_lowrank, gen_compression, gen_sparse, Amplitude, CompressionMode, RngSeed, SparsityMode,
};
use crate::error::{Error, Result};
use crate::matcore::{svd, DEFAULT_RANK_TOL};
use crate::matrix::DenseMatrix;
use crate::solvers::{
    admm_solve, apg_solve, cs_solve_with_report, ls_pcp_baseline, Decomposition, SolverConfig, SolverReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Apg,
    Admm,
    Cs,
    Lspcp,
}

impl SolverChoice {
    pub fn run(self, y: &DenseMatrix, r: &DenseMatrix, cfg: &SolverConfig) -> Result<(Decomposition, SolverReport)> {
        match self {
            SolverChoice::Apg => apg_solve(y, r, cfg),
            SolverChoice::Admm => admm_solve(y, r, cfg),
            SolverChoice::Cs => cs_solve_with_report(y, r, cfg),
            SolverChoice::Lspcp => ls_pcp_baseline(y, r, cfg),
        }
    }
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apg" => Ok(Self::Apg),
            "admm" => Ok(Self::Admm),
            "cs" => Ok(Self::Cs),
            "lspcp" => Ok(Self::Lspcp),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver {other:?} (expected apg, admm, cs or lspcp)"
            ))),
        }
    }
}

/// `‖â − A₀‖_F / ‖A₀‖_F`; when `A₀ = 0` the error is 0 if `‖â‖_F ≤ tol`
/// and `‖â‖_F` otherwise.
pub fn relative_error(a_hat: &DenseMatrix, a0: &DenseMatrix, tol: f64) -> f64 {
    let base = a0.frobenius();
    if base == 0.0 {
        let n = a_hat.frobenius();
        return if n <= tol { 0.0 } else { n };
    }
    (a_hat - a0).frobenius() / base
}

/// One synthetic instance `Y = X₀ + R·A₀`: bilinear low-rank `X₀`,
/// exactly `s` random ±1 entries in `A₀`, Bernoulli-SVD `R`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub y: DenseMatrix,
    pub r: DenseMatrix,
    pub x0: DenseMatrix,
    pub a0: DenseMatrix,
}

pub fn make_instance(
    l: usize,
    f: usize,
    t: usize,
    rank: usize,
    sparsity: SparsityMode,
    seed: RngSeed,
) -> Result<Instance> {
    let x0 = gen_bilinear_lowrank(l, t, rank, derived_seed(seed, 0))?;
    let (a0, _) = gen_sparse(f, t, sparsity, Amplitude::Signs, derived_seed(seed, 1))?;
    let r = gen_compression(l, f, CompressionMode::BernoulliSvd, derived_seed(seed, 2))?;
    let y = &x0 + &(&r * &a0);
    Ok(Instance { y, r, x0, a0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub r_values: Vec<usize>,
    /// Support sizes; alternatively give `pi_values` (fractions of F·T).
    #[serde(default)]
    pub s_values: Vec<usize>,
    #[serde(default)]
    pub pi_values: Vec<f64>,
    pub reps: usize,
    pub base_seed: RngSeed,
    pub solver: SolverChoice,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub solver_config: SolverConfig,
}

fn default_success_threshold() -> f64 {
    1e-3
}

impl GridConfig {
    /// 8×8 grid with 3 reps over fixed fractions of min(L, T) and F·T,
    /// including the cell r ≈ 0.2381·min(L, T), s ≈ 0.0127·F·T.
    /// Iterations are capped at 1000 per solve.
    pub fn desk(l: usize, f: usize, t: usize, base_seed: RngSeed) -> Self {
        const R_FRACTIONS: [f64; 8] = [0.05, 0.1, 0.15, 0.2381, 0.3, 0.35, 0.4, 0.5];
        const S_FRACTIONS: [f64; 8] = [0.004, 0.0127, 0.025, 0.04, 0.06, 0.08, 0.1, 0.12];
        let m = l.min(t) as f64;
        let area = (f * t) as f64;
        let mut r_values: Vec<usize> = R_FRACTIONS.iter().map(|q| (q * m).round().max(1.0) as usize).collect();
        let mut s_values: Vec<usize> = S_FRACTIONS
            .iter()
            .map(|q| (q * area).round().max(1.0) as usize)
            .collect();
        r_values.dedup();
        s_values.dedup();
        Self {
            l,
            f,
            t,
            r_values,
            s_values,
            pi_values: Vec::new(),
            reps: 3,
            base_seed,
            solver: SolverChoice::Apg,
            success_threshold: default_success_threshold(),
            solver_config: SolverConfig::default().with_max_iter(1000),
        }
    }

    /// Support sizes, converting `pi_values` when `s_values` is empty.
    pub fn support_sizes(&self) -> Vec<usize> {
        if !self.s_values.is_empty() {
            return self.s_values.clone();
        }
        let area = (self.f * self.t) as f64;
        self.pi_values.iter().map(|p| (p * area).round() as usize).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.l == 0 || self.f == 0 || self.t == 0 || self.l > self.f {
            return bad(format!(
                "need 0 < L <= F and T > 0, got L={}, F={}, T={}",
                self.l, self.f, self.t
            ));
        }
        if self.r_values.is_empty() {
            return bad("r_values is empty".into());
        }
        if self.s_values.is_empty() == self.pi_values.is_empty() {
            return bad("give exactly one of s_values and pi_values".into());
        }
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        if let Some(&r) = self.r_values.iter().find(|&&r| r > self.l.min(self.t)) {
            return bad(format!("rank {r} exceeds min(L, T)"));
        }
        if let Some(&s) = self.support_sizes().iter().find(|&&s| s > self.f * self.t) {
            return bad(format!("support size {s} exceeds F*T"));
        }
        if let Some(&p) = self.pi_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("pi value {p} outside [0, 1]"));
        }
        Ok(())
    }
}

/// Stable per-cell seed offset (SplitMix64 finalizer over r and s).
pub fn cell_hash(r: usize, s: usize) -> u64 {
    let mut z = (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (s as u64).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn cell_seed(base_seed: RngSeed, r: usize, s: usize) -> RngSeed {
    base_seed.wrapping_add(cell_hash(r, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub r: usize,
    pub s: usize,
    pub mean_rel_error: f64,
    pub success_fraction: f64,
    pub mean_iters: f64,
    pub mean_seconds: f64,
    /// Reps whose solve raised an error; they count as failures and are
    /// left out of the error mean.
    #[serde(default)]
    pub failed_solves: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Row-major over (r_values, s_values).
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn cell(&self, r: usize, s: usize) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.r == r && c.s == s)
    }
}

/// Runs every rep of a single (r, s) cell.
pub fn run_cell(cfg: &GridConfig, r: usize, s: usize) -> GridCell {
    let seed = cell_seed(cfg.base_seed, r, s);
    let (mut err_sum, mut ok, mut iters, mut secs, mut failed) = (0.0, 0usize, 0.0, 0.0, 0usize);
    for rep in 0..cfg.reps {
        let outcome = make_instance(
            cfg.l,
            cfg.f,
            cfg.t,
            r,
            SparsityMode::Uniform(s),
            derived_seed(seed, 1000 * rep as u64),
        )
        .and_then(|inst| {
            let (d, report) = cfg.solver.run(&inst.y, &inst.r, &cfg.solver_config)?;
            Ok((
                relative_error(&d.a_hat, &inst.a0, cfg.solver_config.tol.max(1e-6)),
                report,
            ))
        });
        match outcome {
            Ok((e, report)) => {
                err_sum += e;
                ok += usize::from(e <= cfg.success_threshold);
                iters += report.iterations as f64;
                secs += report.wall_time;
            }
            Err(_) => failed += 1,
        }
    }
    let n = cfg.reps as f64;
    let done = (cfg.reps - failed) as f64;
    GridCell {
        r,
        s,
        // NaN when every rep failed.
        mean_rel_error: err_sum / done,
        success_fraction: ok as f64 / n,
        mean_iters: iters / n,
        mean_seconds: secs / n,
        failed_solves: failed,
    }
}

pub fn phase_grid(cfg: &GridConfig) -> Result<GridResult> {
    phase_grid_parallel(cfg, 1)
}

/// Same as [`phase_grid`] with cells spread over `jobs` threads; the
/// result does not depend on `jobs`.
pub fn phase_grid_parallel(cfg: &GridConfig, jobs: usize) -> Result<GridResult> {
    cfg.validate()?;
    let s_values = cfg.support_sizes();
    let pairs: Vec<(usize, usize)> = cfg
        .r_values
        .iter()
        .flat_map(|&r| s_values.iter().map(move |&s| (r, s)))
        .collect();
    let slots: Vec<Mutex<Option<GridCell>>> = pairs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(pairs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(r, s)) = pairs.get(k) else { break };
                let cell = run_cell(cfg, r, s);
                *slots[k].lock().expect("cell slot") = Some(cell);
            });
        }
    });
    let cells = slots
        .into_iter()
        .map(|m| m.into_inner().expect("cell slot").expect("every cell computed"))
        .collect();
    Ok(GridResult { cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub rank: usize,
    pub pi: f64,
    /// L = round(F / d) for each divisor d.
    pub divisors: Vec<usize>,
    pub reps: usize,
    pub base_seed: RngSeed,
    #[serde(default)]
    pub solver_config: SolverConfig,
}

impl SweepConfig {
    /// F=210, T=420, r=10, π=0.05 over L ∈ {F, F/2, F/3, F/5}.
    pub fn table(base_seed: RngSeed) -> Self {
        Self {
            f: 210,
            t: 420,
            rank: 10,
            pi: 0.05,
            divisors: vec![1, 2, 3, 5],
            reps: 3,
            base_seed,
            solver_config: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub mean_rank_x_hat: f64,
    pub mean_nnz_a_hat: f64,
    pub mean_rel_error: f64,
}

/// Nonzeros of `a` above `1e-6·max|a|`.
pub fn effective_nnz(a: &DenseMatrix) -> usize {
    let top = a.max_abs();
    if top == 0.0 {
        return 0;
    }
    a.count_above(1e-6 * top)
}

/// APG over decreasing numbers of measurements L.
pub fn compression_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.divisors.iter().any(|&d| d == 0 || d > cfg.f) || cfg.reps == 0 {
        return Err(Error::InvalidArgument(
            "divisors must lie in 1..=F and reps >= 1".into(),
        ));
    }
    let mut rows = Vec::new();
    for &d in &cfg.divisors {
        let l = ((cfg.f as f64) / d as f64).round() as usize;
        let (mut rank, mut nnz, mut err) = (0.0, 0.0, 0.0);
        for rep in 0..cfg.reps {
            let seed = derived_seed(cfg.base_seed, 1000 * rep as u64);
            let inst = make_instance(l, cfg.f, cfg.t, cfg.rank, SparsityMode::Bernoulli(cfg.pi), seed)?;
            let (dec, _) = apg_solve(&inst.y, &inst.r, &cfg.solver_config)?;
            rank += svd(&dec.x_hat, DEFAULT_RANK_TOL)?.rank() as f64;
            nnz += effective_nnz(&dec.a_hat) as f64;
            err += relative_error(&dec.a_hat, &inst.a0, 1e-6);
        }
        let n = cfg.reps as f64;
        rows.push(SweepRow {
            l,
            mean_rank_x_hat: rank / n,
            mean_nnz_a_hat: nnz / n,
            mean_rel_error: err / n,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// (rank, π) pairs.
    pub settings: Vec<(usize, f64)>,
    pub reps: usize,
    pub base_seed: RngSeed,
    #[serde(default)]
    pub solver_config: SolverConfig,
}

impl BaselineConfig {
    /// L=105, F=210, T=420 over (r, π) ∈ {5, 10} × {0.01, 0.05}.
    pub fn table(base_seed: RngSeed) -> Self {
        Self {
            l: 105,
            f: 210,
            t: 420,
            settings: vec![(5, 0.01), (5, 0.05), (10, 0.01), (10, 0.05)],
            reps: 3,
            base_seed,
            solver_config: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub r: usize,
    pub pi: f64,
    pub ls_pcp_rel_error: f64,
    pub apg_rel_error: f64,
}

/// LS-PCP against APG on the same instances.
pub fn baseline_table(cfg: &BaselineConfig) -> Result<Vec<BaselineRow>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for (k, &(rank, pi)) in cfg.settings.iter().enumerate() {
        let (mut ls, mut apg) = (0.0, 0.0);
        for rep in 0..cfg.reps {
            let seed = derived_seed(cfg.base_seed, 1000 * k as u64 + rep as u64);
            let inst = make_instance(cfg.l, cfg.f, cfg.t, rank, SparsityMode::Bernoulli(pi), seed)?;
            let (d, _) = ls_pcp_baseline(&inst.y, &inst.r, &cfg.solver_config)?;
            ls += relative_error(&d.a_hat, &inst.a0, 1e-6);
            let (d, _) = apg_solve(&inst.y, &inst.r, &cfg.solver_config)?;
            apg += relative_error(&d.a_hat, &inst.a0, 1e-6);
        }
        let n = cfg.reps as f64;
        rows.push(BaselineRow {
            r: rank,
            pi,
            ls_pcp_rel_error: ls / n,
            apg_rel_error: apg / n,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFormat {
    Csv,
    Json,
}

/// Records that can be written as CSV rows.
pub trait Tabular: Serialize {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl Tabular for GridCell {
    fn header() -> &'static [&'static str] {
        &[
            "r",
            "s",
            "mean_rel_error",
            "success_fraction",
            "mean_iters",
            "mean_seconds",
            "failed_solves",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.r.to_string(),
            self.s.to_string(),
            self.mean_rel_error.to_string(),
            self.success_fraction.to_string(),
            self.mean_iters.to_string(),
            self.mean_seconds.to_string(),
            self.failed_solves.to_string(),
        ]
    }
}

impl Tabular for SweepRow {
    fn header() -> &'static [&'static str] {
        &["L", "mean_rank_x_hat", "mean_nnz_a_hat", "mean_rel_error"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.l.to_string(),
            self.mean_rank_x_hat.to_string(),
            self.mean_nnz_a_hat.to_string(),
            self.mean_rel_error.to_string(),
        ]
    }
}

impl Tabular for BaselineRow {
    fn header() -> &'static [&'static str] {
        &["r", "pi", "ls_pcp_rel_error", "apg_rel_error"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.r.to_string(),
            self.pi.to_string(),
            self.ls_pcp_rel_error.to_string(),
            self.apg_rel_error.to_string(),
        ]
    }
}

/// CSV text with a header row. Floats use the shortest representation
/// that parses back to the same value.
pub fn to_csv<R: Tabular>(rows: &[R]) -> String {
    let mut out = R::header().join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.fields().join(","));
        out.push('\n');
    }
    out
}

pub fn write_results<R: Tabular>(rows: &[R], path: impl AsRef<Path>, format: ResultFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ResultFormat::Csv => to_csv(rows),
        ResultFormat::Json => serde_json::to_string_pretty(rows).map_err(|e| Error::InvalidArgument(e.to_string()))?,
    };
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses grid CSV written by [`write_results`].
pub fn parse_grid_csv(text: &str, path: &Path) -> Result<GridResult> {
    let mut lines = text.lines().enumerate();
    let expected = GridCell::header().join(",");
    match lines.next() {
        Some((_, h)) if h.trim() == expected => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                field: 1,
                msg: format!("expected header {expected:?}"),
            })
        }
    }
    let mut cells = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let err = |field: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            field: field + 1,
            msg,
        };
        if parts.len() != 7 {
            return Err(err(
                parts.len().min(6),
                format!("expected 7 fields, got {}", parts.len()),
            ));
        }
        let int = |k: usize| parts[k].trim().parse::<usize>().map_err(|e| err(k, e.to_string()));
        let float = |k: usize| parts[k].trim().parse::<f64>().map_err(|e| err(k, e.to_string()));
        cells.push(GridCell {
            r: int(0)?,
            s: int(1)?,
            mean_rel_error: float(2)?,
            success_fraction: float(3)?,
            mean_iters: float(4)?,
            mean_seconds: float(5)?,
            failed_solves: int(6)?,
        });
    }
    Ok(GridResult { cells })
}
