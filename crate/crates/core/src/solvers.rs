//! Solvers for `min ‖X‖_* + λ‖A‖₁ s.t. Y = X + R·A`.
//!
//! - [`apg_solve`]: accelerated proximal gradient on the penalized problem
//!   `ν‖X‖_* + νλ‖A‖₁ + ½‖Y − X − RA‖²_F`, with continuation on `ν`.
//! - [`admm_solve`]: ADMM on the split problem with `B = A` as the
//!   decoupling variable.
//! - [`ls_pcp_baseline`]: pseudo-invert `R`, then run plain PCP.
//! - [`cs_solve`]: ADMM with `X` frozen at zero (pure ℓ1 recovery).

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matcore::{norm, pinv, shrink, svd, NormKind, DEFAULT_RANK_TOL};
use crate::matrix::DenseMatrix;

/// Tuning knobs. `None` fields are derived from the data when a solve
/// starts (see [`SolverConfig::resolve`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sparsity weight λ; default `1/sqrt(max(F, T))`.
    pub lambda: Option<f64>,
    /// Initial penalty ν₀; default `0.99·‖Y‖` (spectral).
    pub nu0: Option<f64>,
    /// Target penalty ν̄; default `1e-9·ν₀`.
    pub nu_bar: Option<f64>,
    /// Continuation factor υ ∈ (0, 1).
    pub upsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// ADMM augmented-Lagrangian coefficient c.
    pub penalty_c: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            nu0: None,
            nu_bar: None,
            upsilon: 0.9,
            tol: 1e-8,
            max_iter: 10_000,
            penalty_c: 1.0,
        }
    }
}

/// A [`SolverConfig`] with every data-dependent default filled in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub lambda: f64,
    pub nu0: f64,
    pub nu_bar: f64,
    pub upsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub penalty_c: f64,
}

impl SolverConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_penalty_c(mut self, c: f64) -> Self {
        self.penalty_c = c;
        self
    }

    pub fn resolve(&self, y: &DenseMatrix, r: &DenseMatrix) -> Result<ResolvedConfig> {
        let lambda = self.lambda.unwrap_or_else(|| default_lambda(r.cols(), y.cols()));
        let nu0 = match self.nu0 {
            Some(v) => v,
            None => 0.99 * norm(y, NormKind::Spectral),
        };
        let nu_bar = self.nu_bar.unwrap_or(1e-9 * nu0);
        let cfg = ResolvedConfig {
            lambda,
            nu0,
            nu_bar,
            upsilon: self.upsilon,
            tol: self.tol,
            max_iter: self.max_iter,
            penalty_c: self.penalty_c,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ResolvedConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.nu0 >= 0.0) || !(self.nu_bar >= 0.0) || self.nu_bar > self.nu0 || !self.nu0.is_finite() {
            return bad(format!(
                "need 0 <= nu_bar <= nu0, got nu_bar={}, nu0={}",
                self.nu_bar, self.nu0
            ));
        }
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return bad(format!("upsilon must lie in (0, 1), got {}", self.upsilon));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.penalty_c > 0.0) || !self.penalty_c.is_finite() {
            return bad(format!("penalty c must be > 0, got {}", self.penalty_c));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
}

/// Convergence telemetry. `objective_trace[k]` is `‖X‖_* + λ‖A‖₁` after
/// iteration `k + 1`; see each solver for what `residual_trace` records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub stop_reason: StopReason,
    /// Seconds; zero on targets without a monotonic clock.
    pub wall_time: f64,
    pub config: ResolvedConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub x_hat: DenseMatrix,
    pub a_hat: DenseMatrix,
}

pub fn default_lambda(f: usize, t: usize) -> f64 {
    1.0 / (f.max(t).max(1) as f64).sqrt()
}

/// `(‖X‖_* + λ‖A‖₁, ‖Y − X − RA‖_F)`.
pub fn evaluate(d: &Decomposition, y: &DenseMatrix, r: &DenseMatrix, lambda: f64) -> Result<(f64, f64)> {
    check_shapes(y, r)?;
    if d.x_hat.shape() != y.shape() || d.a_hat.shape() != (r.cols(), y.cols()) {
        return Err(shape_err(
            "evaluate",
            format!("x {}x{}, a {}x{}", y.rows(), y.cols(), r.cols(), y.cols()),
            format!(
                "x {}x{}, a {}x{}",
                d.x_hat.rows(),
                d.x_hat.cols(),
                d.a_hat.rows(),
                d.a_hat.cols()
            ),
        ));
    }
    let objective = norm(&d.x_hat, NormKind::Nuclear) + lambda * norm(&d.a_hat, NormKind::L1Entrywise);
    let residual = (&(y - &d.x_hat) - &(r * &d.a_hat)).frobenius();
    Ok((objective, residual))
}

fn check_shapes(y: &DenseMatrix, r: &DenseMatrix) -> Result<()> {
    if y.rows() != r.rows() {
        return Err(shape_err(
            "solver input",
            format!("y with {} rows (rows of R)", r.rows()),
            format!("{}x{}", y.rows(), y.cols()),
        ));
    }
    if !y.is_finite() || !r.is_finite() {
        return Err(Error::InvalidArgument("non-finite solver input".into()));
    }
    Ok(())
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Multiplication by `R` that skips the work when `R` is the identity.
struct Compression<'a> {
    r: &'a DenseMatrix,
    rt: DenseMatrix,
    identity: bool,
}

impl<'a> Compression<'a> {
    fn new(r: &'a DenseMatrix) -> Self {
        let identity = r.rows() == r.cols() && *r == DenseMatrix::identity(r.rows());
        Self {
            r,
            rt: if identity {
                DenseMatrix::zeros(0, 0)
            } else {
                r.transpose()
            },
            identity,
        }
    }

    fn apply(&self, a: &DenseMatrix) -> DenseMatrix {
        if self.identity {
            a.clone()
        } else {
            self.r * a
        }
    }

    fn apply_t(&self, m: &DenseMatrix) -> DenseMatrix {
        if self.identity {
            m.clone()
        } else {
            &self.rt * m
        }
    }
}

fn axpby(a: f64, x: &DenseMatrix, b: f64, y: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| a * x.get(i, j) + b * y.get(i, j))
}

/// Singular value thresholding that also returns the nuclear norm of the
/// result.
fn svt_with_norm(m: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, f64)> {
    let f = svd(m, DEFAULT_RANK_TOL)?;
    let keep: Vec<usize> = (0..f.sigma.len()).filter(|&k| f.sigma[k] > tau).collect();
    if keep.is_empty() {
        return Ok((DenseMatrix::zeros(m.rows(), m.cols()), 0.0));
    }
    let shrunk: Vec<f64> = keep.iter().map(|&k| f.sigma[k] - tau).collect();
    let us = DenseMatrix::from_fn(m.rows(), keep.len(), |i, c| f.u.get(i, keep[c]) * shrunk[c]);
    let out = &us * &f.v.select_cols(&keep).transpose();
    Ok((out, shrunk.iter().sum()))
}

fn soft_with_l1(m: &DenseMatrix, tau: f64) -> (DenseMatrix, f64) {
    let out = m.map(|v| shrink(v, tau));
    let l1 = out.to_row_major().iter().map(|v| v.abs()).sum();
    (out, l1)
}

/// Accelerated proximal gradient with continuation.
///
/// `residual_trace` records `‖Y − X − RA‖_F`. Iterations stop once `ν` has
/// reached `ν̄` and `‖Z‖_F ≤ tol·max(1, L_f‖X[k]‖_F)`, where `Z` is the
/// subgradient surrogate of the penalized cost.
pub fn apg_solve(y: &DenseMatrix, r: &DenseMatrix, cfg: &SolverConfig) -> Result<(Decomposition, SolverReport)> {
    check_shapes(y, r)?;
    let cfg = cfg.resolve(y, r)?;
    let clock = Stopwatch::start();
    let op = Compression::new(r);
    let lf = if op.identity {
        2.0
    } else {
        crate::matcore::lipschitz_constant(r)
    };
    let (l, t, f) = (y.rows(), y.cols(), r.cols());

    let mut x = DenseMatrix::zeros(l, t);
    let mut x_prev = x.clone();
    let mut a = DenseMatrix::zeros(f, t);
    let mut a_prev = a.clone();
    // R·A[k] and R·A[k−1], carried to avoid recomputing products.
    let mut ra = DenseMatrix::zeros(l, t);
    let mut ra_prev = ra.clone();
    let (mut t_k, mut t_prev) = (1.0_f64, 1.0_f64);
    let mut nu = cfg.nu0;

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for _ in 0..cfg.max_iter {
        let beta = (t_prev - 1.0) / t_k;
        let tx = axpby(1.0 + beta, &x, -beta, &x_prev);
        let ta = axpby(1.0 + beta, &a, -beta, &a_prev);
        let rta = axpby(1.0 + beta, &ra, -beta, &ra_prev);
        let resid = &(y - &tx) - &rta;
        let gx = axpby(1.0, &tx, 1.0 / lf, &resid);
        let ga = axpby(1.0, &ta, 1.0 / lf, &op.apply_t(&resid));

        let (x_next, nuclear) = svt_with_norm(&gx, nu / lf)?;
        let (a_next, l1) = soft_with_l1(&ga, cfg.lambda * nu / lf);
        let ra_next = op.apply(&a_next);

        // Z[k+1]
        let d = &(&(&x_next + &ra_next) - &tx) - &rta;
        let z_top = axpby(lf, &(&tx - &x_next), 1.0, &d);
        let z_bot = axpby(lf, &(&ta - &a_next), 1.0, &op.apply_t(&d));
        let z_norm = (z_top.frobenius().powi(2) + z_bot.frobenius().powi(2)).sqrt();
        let threshold = cfg.tol * (lf * x.frobenius()).max(1.0);

        objective_trace.push(nuclear + cfg.lambda * l1);
        residual_trace.push((&(y - &x_next) - &ra_next).frobenius());

        let at_target = nu <= cfg.nu_bar;
        x_prev = std::mem::replace(&mut x, x_next);
        a_prev = std::mem::replace(&mut a, a_next);
        ra_prev = std::mem::replace(&mut ra, ra_next);
        let t_next = (1.0 + (4.0 * t_k * t_k + 1.0).sqrt()) / 2.0;
        t_prev = t_k;
        t_k = t_next;
        nu = (cfg.upsilon * nu).max(cfg.nu_bar);

        if at_target && z_norm <= threshold {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let report = SolverReport {
        iterations: objective_trace.len(),
        objective_trace,
        residual_trace,
        stop_reason,
        wall_time: clock.seconds(),
        config: cfg,
    };
    Ok((Decomposition { x_hat: x, a_hat: a }, report))
}

/// `(RᵀR + I)⁻¹` applied through the matrix inversion lemma
/// `I − V_R·diag(σ²/(1+σ²))·V_Rᵀ`, factored once per solve.
pub struct RidgeInverse {
    v: DenseMatrix,
    vt: DenseMatrix,
    weights: Vec<f64>,
}

impl RidgeInverse {
    pub fn new(r: &DenseMatrix) -> Result<Self> {
        let f = svd(r, DEFAULT_RANK_TOL)?;
        let p = f.rank();
        let keep: Vec<usize> = (0..p).collect();
        let v = f.v.select_cols(&keep);
        Ok(Self {
            vt: v.transpose(),
            v,
            weights: f.sigma[..p].iter().map(|s| s * s / (1.0 + s * s)).collect(),
        })
    }

    pub fn apply(&self, w: &DenseMatrix) -> DenseMatrix {
        if self.weights.is_empty() {
            return w.clone();
        }
        let proj = &self.vt * w;
        let scaled = DenseMatrix::from_fn(proj.rows(), proj.cols(), |i, j| proj.get(i, j) * self.weights[i]);
        w - &(&self.v * &scaled)
    }
}

fn admm_core(
    y: &DenseMatrix,
    r: &DenseMatrix,
    cfg: &SolverConfig,
    freeze_x: bool,
) -> Result<(Decomposition, SolverReport)> {
    check_shapes(y, r)?;
    let cfg = cfg.resolve(y, r)?;
    let clock = Stopwatch::start();
    let op = Compression::new(r);
    let ridge = RidgeInverse::new(r)?;
    let (l, t, f) = (y.rows(), y.cols(), r.cols());
    let c = cfg.penalty_c;
    let scale = y.frobenius().max(1.0);

    let mut x = DenseMatrix::zeros(l, t);
    let mut a = DenseMatrix::zeros(f, t);
    let mut b = DenseMatrix::zeros(f, t);
    let mut rb = DenseMatrix::zeros(l, t);
    let mut m_split = DenseMatrix::zeros(f, t); // multiplier of B = A
    let mut m_fit = DenseMatrix::zeros(l, t); // multiplier of Y = X + RB

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for _ in 0..cfg.max_iter {
        // [S1] dual ascent
        m_split = axpby(1.0, &m_split, c, &(&b - &a));
        m_fit = axpby(1.0, &m_fit, c, &(&(y - &x) - &rb));

        // [S2] X and A
        let mut nuclear = 0.0;
        if !freeze_x {
            let target = axpby(1.0, &(y - &rb), 1.0 / c, &m_fit);
            let (x_next, nn) = svt_with_norm(&target, 1.0 / c)?;
            x = x_next;
            nuclear = nn;
        }
        let (a_next, l1) = soft_with_l1(&axpby(1.0, &b, 1.0 / c, &m_split), cfg.lambda / c);
        a = a_next;

        // [S3] B
        let ra = op.apply(&a);
        let rhs = axpby(
            1.0,
            &op.apply_t(&(&(y - &x) - &ra)),
            -1.0 / c,
            &(&m_split - &op.apply_t(&m_fit)),
        );
        let b_next = &a + &ridge.apply(&rhs);
        let rb_next = op.apply(&b_next);
        let dual = c * (&b_next - &b).frobenius();
        b = b_next;
        rb = rb_next;

        let primal = (&(y - &x) - &rb).frobenius() + (&a - &b).frobenius();
        objective_trace.push(nuclear + cfg.lambda * l1);
        residual_trace.push(primal / scale);
        if primal <= cfg.tol * scale && dual <= cfg.tol * scale {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let report = SolverReport {
        iterations: objective_trace.len(),
        objective_trace,
        residual_trace,
        stop_reason,
        wall_time: clock.seconds(),
        config: cfg,
    };
    Ok((Decomposition { x_hat: x, a_hat: a }, report))
}

/// ADMM on the split problem (`B = A`).
///
/// `residual_trace` records `(‖Y − X − RB‖_F + ‖A − B‖_F) / max(1, ‖Y‖_F)`;
/// iterations stop when that primal residual and the dual residual
/// `c‖B[k] − B[k−1]‖_F / max(1, ‖Y‖_F)` are both below `tol`.
pub fn admm_solve(y: &DenseMatrix, r: &DenseMatrix, cfg: &SolverConfig) -> Result<(Decomposition, SolverReport)> {
    admm_core(y, r, cfg, false)
}

/// ℓ1 recovery `min λ‖A‖₁ s.t. Y = RA`: ADMM with `X` held at zero.
pub fn cs_solve(y: &DenseMatrix, r: &DenseMatrix, cfg: &SolverConfig) -> Result<DenseMatrix> {
    Ok(admm_core(y, r, cfg, true)?.0.a_hat)
}

/// Same as [`cs_solve`] but keeps the convergence report.
pub fn cs_solve_with_report(
    y: &DenseMatrix,
    r: &DenseMatrix,
    cfg: &SolverConfig,
) -> Result<(Decomposition, SolverReport)> {
    admm_core(y, r, cfg, true)
}

/// LS-PCP: `Ŷ = R†Y`, then PCP (`R = I`) on `Ŷ`.
pub fn ls_pcp_baseline(y: &DenseMatrix, r: &DenseMatrix, cfg: &SolverConfig) -> Result<(Decomposition, SolverReport)> {
    check_shapes(y, r)?;
    let fac = svd(r, DEFAULT_RANK_TOL)?;
    if fac.rank() < r.rows() {
        return Err(Error::RankDeficient(format!(
            "compression matrix has rank {} < {} rows",
            fac.rank(),
            r.rows()
        )));
    }
    let y_hat = &pinv(r, DEFAULT_RANK_TOL)? * y;
    apg_solve(&y_hat, &DenseMatrix::identity(r.cols()), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lambda_values() {
        assert!((default_lambda(210, 420) - 1.0 / 420f64.sqrt()).abs() < 1e-15);
        assert!((default_lambda(210, 420) - 0.04880).abs() < 1e-5);
        assert!((default_lambda(100, 100) - 0.1).abs() < 1e-15);
        assert_eq!(default_lambda(1, 1), 1.0);
    }

    #[test]
    fn evaluate_trivial_cases() {
        let y = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let r = DenseMatrix::identity(2);
        let zero = Decomposition {
            x_hat: DenseMatrix::zeros(2, 2),
            a_hat: DenseMatrix::zeros(2, 2),
        };
        let (obj, res) = evaluate(&zero, &y, &r, 0.3).unwrap();
        assert_eq!(obj, 0.0);
        assert!((res - y.frobenius()).abs() < 1e-15);
        let d = Decomposition {
            x_hat: DenseMatrix::diag(&[2.0, 3.0]),
            a_hat: DenseMatrix::zeros(2, 2),
        };
        let (obj, _) = evaluate(&d, &y, &r, 123.0).unwrap();
        assert!((obj - 5.0).abs() < 1e-12);
        let bad = Decomposition {
            x_hat: DenseMatrix::zeros(3, 2),
            a_hat: DenseMatrix::zeros(2, 2),
        };
        assert!(evaluate(&bad, &y, &r, 1.0).is_err());
    }

    #[test]
    fn zero_observation_gives_zero_decomposition() {
        let y = DenseMatrix::zeros(4, 6);
        let r = DenseMatrix::from_fn(4, 8, |i, j| ((i + 2 * j) % 3) as f64 - 1.0);
        let (d, rep) = apg_solve(&y, &r, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(d.x_hat.max_abs(), 0.0);
        assert_eq!(d.a_hat.max_abs(), 0.0);
        let (d, _) = admm_solve(&y, &r, &SolverConfig::default()).unwrap();
        assert_eq!(d.x_hat.max_abs() + d.a_hat.max_abs(), 0.0);
        assert_eq!(cs_solve(&y, &r, &SolverConfig::default()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn config_validation() {
        let y = DenseMatrix::identity(3);
        let r = DenseMatrix::identity(3);
        let bad = SolverConfig {
            upsilon: 1.0,
            ..Default::default()
        };
        assert!(apg_solve(&y, &r, &bad).is_err());
        let bad = SolverConfig {
            nu0: Some(1.0),
            nu_bar: Some(2.0),
            ..Default::default()
        };
        assert!(bad.resolve(&y, &r).is_err());
        let bad = SolverConfig::default().with_lambda(-1.0);
        assert!(bad.resolve(&y, &r).is_err());
        assert!(apg_solve(&DenseMatrix::zeros(2, 3), &r, &SolverConfig::default()).is_err());
    }

    #[test]
    fn max_iter_is_reported_not_raised() {
        let y = DenseMatrix::from_fn(5, 7, |i, j| ((i * 7 + j) as f64 * 0.31).sin());
        let r = DenseMatrix::identity(5);
        let (_, rep) = apg_solve(&y, &r, &SolverConfig::default().with_max_iter(3)).unwrap();
        assert_eq!(rep.stop_reason, StopReason::MaxIter);
        assert_eq!(rep.iterations, 3);
        assert_eq!(rep.objective_trace.len(), 3);
        assert_eq!(rep.residual_trace.len(), 3);
    }

    #[test]
    fn ls_pcp_rejects_rank_deficient_r() {
        let r = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let y = DenseMatrix::zeros(2, 4);
        assert!(matches!(
            ls_pcp_baseline(&y, &r, &SolverConfig::default()),
            Err(Error::RankDeficient(_))
        ));
    }
}
