//! Identifiability diagnostics: incoherence between the low-rank and
//! compressed-sparse subspaces, restricted isometry constants of `R`,
//! the sufficient conditions for exact recovery, and dual certificates.
//!
//! Every quantity is computed exactly (dense eigenproblems, exhaustive
//! subset enumeration), so these routines are meant for small instances.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matcore::{
    norm, proj_omega, proj_phi, svd, sym_eigen, sym_eigenvalues, NormKind, Subspaces, SupportSet, SvdFactors,
    DEFAULT_RANK_TOL,
};
use crate::matrix::DenseMatrix;

/// Largest number of subsets (or subset pairs) the RIC routines enumerate.
pub const RIC_BUDGET: u128 = 1_000_000;

/// Default equality tolerance for certificate conditions C1 and C2.
pub const DEFAULT_TOL_EQ: f64 = 1e-8;

/// `A_Ω` with a smaller least singular value is treated as rank deficient.
const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceReport {
    /// μ(Ω_R, Φ): cosine of the smallest angle between the two subspaces.
    pub mu: f64,
    pub gamma_u: f64,
    pub gamma_v: f64,
    pub gamma_r_u: f64,
    pub xi_r: f64,
    pub eta_r: f64,
}

fn column_norms(r: &DenseMatrix) -> Vec<f64> {
    (0..r.cols())
        .map(|j| r.col(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn max_row_norm(b: &DenseMatrix) -> f64 {
    (0..b.rows())
        .map(|i| b.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn check_conformable(spaces: &Subspaces, support: &SupportSet, r: &DenseMatrix) -> Result<()> {
    if r.rows() != spaces.rows() || r.cols() != support.rows || support.cols != spaces.cols() {
        return Err(shape_err(
            "diagnostics input",
            "U: L×r, V: T×r, R: L×F, support over F×T",
            format!(
                "U {}x{}, V {}x{}, R {}x{}, support {}x{}",
                spaces.rows(),
                spaces.rank(),
                spaces.cols(),
                spaces.rank(),
                r.rows(),
                r.cols(),
                support.rows,
                support.cols
            ),
        ));
    }
    Ok(())
}

/// `W_+·Λ_+^{-1/2}`: maps coordinates of an orthonormal basis of range(B)
/// back to coefficient space, given the Gram matrix `BᵀB`.
fn whitening(gram: &DenseMatrix) -> Result<DenseMatrix> {
    let (vals, vecs) = sym_eigen(gram)?;
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 1e-12 * top.max(0.0)).collect();
    Ok(DenseMatrix::from_fn(gram.rows(), keep.len(), |i, c| {
        vecs.get(i, keep[c]) / vals[keep[c]].sqrt()
    }))
}

/// μ(Ω_R, Φ) from the generalized eigenproblem `(BᵀP_ΦB, BᵀB)`, where the
/// columns of `B` are `vec(R·e_i·e_jᵀ)` for `(i, j)` in the support.
///
/// Both Gram matrices are formed in closed form from `RᵀR`, `RᵀP_UR` and
/// `P_V`, so the LT-dimensional vectors are never materialized.
pub fn coherence_mu(spaces: &Subspaces, support: &SupportSet, r: &DenseMatrix) -> Result<f64> {
    check_conformable(spaces, support, r)?;
    if support.is_empty() || spaces.rank() == 0 {
        return Ok(0.0);
    }
    let rt = r.transpose();
    let k = &rt * r;
    let rtu = &rt * &spaces.u_basis;
    let ku = &rtu * &rtu.transpose();
    let pv = spaces.proj_v();
    let idx = &support.indices;
    let n = idx.len();
    let gram = DenseMatrix::from_fn(n, n, |a, b| {
        let ((i, j), (ip, jp)) = (idx[a], idx[b]);
        if j == jp {
            k.get(i, ip)
        } else {
            0.0
        }
    });
    let proj = DenseMatrix::from_fn(n, n, |a, b| {
        let ((i, j), (ip, jp)) = (idx[a], idx[b]);
        let same = if j == jp { ku.get(i, ip) } else { 0.0 };
        same + pv.get(j, jp) * (k.get(i, ip) - ku.get(i, ip))
    });
    let w = whitening(&gram)?;
    if w.cols() == 0 {
        return Ok(0.0);
    }
    let h = &(&w.transpose() * &proj) * &w;
    let h = DenseMatrix::from_fn(h.rows(), h.cols(), |a, b| 0.5 * (h.get(a, b) + h.get(b, a)));
    let top = sym_eigenvalues(&h)?.last().copied().unwrap_or(0.0);
    Ok(top.clamp(0.0, 1.0).sqrt())
}

/// All incoherence parameters. `γ_R(U)` is taken over every column of `R`
/// (not only the support columns), so every column must be nonzero.
pub fn incoherence_params(spaces: &Subspaces, support: &SupportSet, r: &DenseMatrix) -> Result<IncoherenceReport> {
    check_conformable(spaces, support, r)?;
    let norms = column_norms(r);
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Degenerate(format!("column {i} of R is zero")));
    }
    let rtu = &r.transpose() * &spaces.u_basis;
    let mut gamma_r_u: f64 = 0.0;
    let mut eta_r: f64 = 0.0;
    for i in 0..r.cols() {
        let proj = rtu.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        gamma_r_u = gamma_r_u.max(proj / norms[i]);
        let l1: f64 = r.col(i).iter().map(|v| v.abs()).sum();
        eta_r = eta_r.max(l1 / norms[i]);
    }
    let xi_r = (&rtu * &spaces.v_basis.transpose()).max_abs();
    Ok(IncoherenceReport {
        mu: coherence_mu(spaces, support, r)?,
        gamma_u: max_row_norm(&spaces.u_basis),
        gamma_v: max_row_norm(&spaces.v_basis),
        gamma_r_u: gamma_r_u.min(1.0),
        xi_r,
        eta_r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RicKind {
    /// δ_k: restricted isometry constant of order k.
    Delta { k: usize },
    /// θ_{s1,s2}: restricted orthogonality constant.
    Theta { s1: usize, s2: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicEstimate {
    #[serde(flatten)]
    pub kind: RicKind,
    pub c: f64,
    pub value: f64,
    pub subsets_examined: u64,
    pub exact: bool,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

fn check_budget(needed: u128) -> Result<()> {
    if needed > RIC_BUDGET {
        return Err(Error::Infeasible {
            needed,
            budget: RIC_BUDGET,
        });
    }
    Ok(())
}

/// Extreme eigenvalues `(min, max)` of `R_Sᵀ R_S` over all k-subsets S.
fn extreme_gram_eigs(r: &DenseMatrix, k: usize) -> Result<(f64, f64, u64)> {
    if k == 0 || k > r.cols() {
        return Err(Error::InvalidArgument(format!(
            "subset size {k} outside 1..={}",
            r.cols()
        )));
    }
    check_budget(binomial(r.cols(), k))?;
    let gram = &r.transpose() * r;
    let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0u64);
    for subset in (0..r.cols()).combinations(k) {
        let g = DenseMatrix::from_fn(k, k, |a, b| gram.get(subset[a], subset[b]));
        let eig = sym_eigenvalues(&g)?;
        lo = lo.min(eig[0]);
        hi = hi.max(eig[k - 1]);
        count += 1;
    }
    Ok((lo, hi, count))
}

/// Exact δ_k(R) at normalization `c`, by enumerating every k-subset.
pub fn ric_delta(r: &DenseMatrix, k: usize, c: f64) -> Result<RicEstimate> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("normalization c must be > 0, got {c}")));
    }
    let (lo, hi, count) = extreme_gram_eigs(r, k)?;
    Ok(RicEstimate {
        kind: RicKind::Delta { k },
        c,
        value: (1.0 - lo / c).max(hi / c - 1.0).max(0.0),
        subsets_examined: count,
        exact: true,
    })
}

/// δ_k(R) at the normalization that minimizes it,
/// `c = (max_S u_S + min_S l_S) / 2`.
pub fn ric_delta_best_c(r: &DenseMatrix, k: usize) -> Result<RicEstimate> {
    let (lo, hi, count) = extreme_gram_eigs(r, k)?;
    if !(hi > 0.0) {
        return Err(Error::Degenerate("R is zero on every subset".into()));
    }
    let c = 0.5 * (hi + lo.max(0.0));
    Ok(RicEstimate {
        kind: RicKind::Delta { k },
        c,
        value: (1.0 - lo / c).max(hi / c - 1.0).max(0.0),
        subsets_examined: count,
        exact: true,
    })
}

/// Exact θ_{s1,s2}(R) at normalization `c`, by enumerating every pair of
/// disjoint subsets.
pub fn ric_theta(r: &DenseMatrix, s1: usize, s2: usize, c: f64) -> Result<RicEstimate> {
    let f = r.cols();
    if s1 == 0 || s2 == 0 || s1 + s2 > f {
        return Err(Error::InvalidArgument(format!("need s1, s2 >= 1 and s1 + s2 <= {f}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("normalization c must be > 0, got {c}")));
    }
    let pairs = binomial(f, s1).saturating_mul(binomial(f - s1, s2));
    check_budget(pairs)?;
    let gram = &r.transpose() * r;
    let (mut best, mut count) = (0.0_f64, 0u64);
    for first in (0..f).combinations(s1) {
        let rest: Vec<usize> = (0..f).filter(|i| !first.contains(i)).collect();
        for second in rest.iter().copied().combinations(s2) {
            let cross = DenseMatrix::from_fn(s1, s2, |a, b| gram.get(first[a], second[b]));
            let sv = if s1 == 1 && s2 == 1 {
                cross.get(0, 0).abs()
            } else {
                norm(&cross, NormKind::Spectral)
            };
            best = best.max(sv);
            count += 1;
        }
    }
    Ok(RicEstimate {
        kind: RicKind::Theta { s1, s2 },
        c,
        value: best / c,
        subsets_examined: count,
        exact: true,
    })
}

/// Inputs the condition checks were evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionInputs {
    pub mu: f64,
    pub gamma_r_u: f64,
    pub gamma_v: f64,
    pub xi_r: f64,
    pub delta_k: f64,
    pub delta_1: f64,
    pub theta_11: f64,
    pub c: f64,
    pub rank: usize,
    pub s: usize,
    pub k: usize,
    /// Coherence constant of the principal-components variant.
    pub rho: Option<f64>,
}

/// Sufficient conditions for exact recovery and the admissible λ range.
/// `alpha_max`/`beta_max` are `None` where their formulas are undefined
/// (nonpositive denominators), in which case the dependent conditions fail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub omega_max: f64,
    pub alpha_max: Option<f64>,
    pub beta_max: Option<f64>,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub inputs: ConditionInputs,
}

impl ConditionReport {
    /// Midpoint of `(lambda_min, lambda_max)` when that interval is nonempty.
    pub fn lambda_midpoint(&self) -> Option<f64> {
        match (self.lambda_min, self.lambda_max) {
            (Some(lo), Some(hi)) if lo < hi => Some(0.5 * (lo + hi)),
            _ => None,
        }
    }
}

fn alpha_max(c: f64, delta_k: f64, mu: f64) -> Option<f64> {
    let denom = c * (1.0 - delta_k) * (1.0 - mu).powi(2);
    if !(denom > 0.0) {
        return None;
    }
    let arg = 1.0 / denom - 1.0;
    (arg >= 0.0).then(|| arg.sqrt())
}

/// `ω / ((1−μ)²(1−δ) − ω)`; `None` when the denominator is not positive.
fn beta_max(omega: f64, mu: f64, delta_k: f64) -> Option<f64> {
    let denom = (1.0 - mu).powi(2) * (1.0 - delta_k) - omega;
    (denom > 0.0).then(|| omega / denom)
}

fn validate_inputs(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("condition inputs must be finite".into()));
    }
    Ok(())
}

/// General-`R` sufficient conditions (I) and (II) with the induced λ range.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem1(
    inc: &IncoherenceReport,
    delta_k: &RicEstimate,
    theta_11: &RicEstimate,
    delta_1: &RicEstimate,
    rank: usize,
    s: usize,
    k: usize,
    c: f64,
) -> Result<ConditionReport> {
    let (mu, dk, d1, th) = (inc.mu, delta_k.value, delta_1.value, theta_11.value);
    validate_inputs(&[mu, dk, d1, th, inc.gamma_r_u, inc.gamma_v, inc.xi_r, c])?;
    if s == 0 {
        return Err(Error::InvalidArgument("sparsity level s must be >= 1".into()));
    }
    let (gr2, gv2) = (inc.gamma_r_u.powi(2), inc.gamma_v.powi(2));
    let (kf, sf, rf) = (k as f64, s as f64, rank as f64);
    let sqrt2 = std::f64::consts::SQRT_2;
    let omega = th * (sqrt2 * kf + sf * gv2) + (1.0 + d1) * (sqrt2 * kf * gr2 + kf * gv2 + sf * gr2 * gv2);
    let alpha = alpha_max(c, dk, mu);
    let beta = beta_max(omega, mu, dk);
    let cond_i = (1.0 - mu).powi(2) * (1.0 - dk) > omega;

    let mut lambda_min = None;
    let mut lambda_max = None;
    let mut cond_ii = false;
    if let Some(a) = alpha {
        lambda_max = Some((1.0 / (1.0 + a) - rf.sqrt() * mu * c.sqrt() * (1.0 + dk).sqrt()) / sf.sqrt());
        if let Some(b) = beta.filter(|&b| b < 1.0) {
            let ratio = (1.0 + b) / (1.0 - b);
            lambda_min = Some(ratio * inc.xi_r);
            cond_ii = cond_i
                && (1.0 + a) * ratio * inc.xi_r * sf.sqrt() + mu * (1.0 + dk).sqrt() * (1.0 + a) * rf.sqrt() < 1.0;
        }
    }
    Ok(ConditionReport {
        omega_max: omega,
        alpha_max: alpha,
        beta_max: beta,
        cond_i,
        cond_ii,
        lambda_min,
        lambda_max,
        inputs: ConditionInputs {
            mu,
            gamma_r_u: inc.gamma_r_u,
            gamma_v: inc.gamma_v,
            xi_r: inc.xi_r,
            delta_k: dk,
            delta_1: d1,
            theta_11: th,
            c,
            rank,
            s,
            k,
            rho: None,
        },
    })
}

/// The `R = I` specialization with coherence constant `rho`.
pub fn check_pcp(
    inc: &IncoherenceReport,
    rho: f64,
    rank: usize,
    s: usize,
    k: usize,
    l: usize,
    t: usize,
) -> Result<ConditionReport> {
    let mu = inc.mu;
    validate_inputs(&[mu, rho])?;
    if s == 0 || l == 0 || t == 0 {
        return Err(Error::InvalidArgument("need s, L, T >= 1".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be > 0, got {rho}")));
    }
    let (lf, tf, rf, sf) = (l as f64, t as f64, rank as f64, s as f64);
    let omega = rho * rf * k as f64 * (1.0 / lf + 1.0 / tf);
    let alpha = alpha_max(1.0, 0.0, mu);
    let beta = beta_max(omega, mu, 0.0);
    let cond_i = mu >= 0.0 && mu < 1.0 - omega.sqrt();

    let xi_bound = (rho * rf / (lf * tf)).sqrt();
    let mut lambda_min = None;
    let mut lambda_max = None;
    let mut cond_ii = false;
    if let Some(a) = alpha {
        lambda_max = Some((1.0 / (1.0 + a) - rf.sqrt() * mu) / sf.sqrt());
        if let Some(b) = beta.filter(|&b| b < 1.0) {
            let ratio = (1.0 + b) / (1.0 - b);
            lambda_min = Some(ratio * xi_bound);
            cond_ii = cond_i && (1.0 + a) * rf.sqrt() * (ratio * (rho * sf / (lf * tf)).sqrt() + mu) < 1.0;
        }
    }
    Ok(ConditionReport {
        omega_max: omega,
        alpha_max: alpha,
        beta_max: beta,
        cond_i,
        cond_ii,
        lambda_min,
        lambda_max,
        inputs: ConditionInputs {
            mu,
            gamma_r_u: inc.gamma_u,
            gamma_v: inc.gamma_v,
            xi_r: inc.xi_r,
            delta_k: 0.0,
            delta_1: 0.0,
            theta_11: 0.0,
            c: 1.0,
            rank,
            s,
            k,
            rho: Some(rho),
        },
    })
}

/// Compressed-sensing condition `δ_k + k·θ_{1,1} < 1`.
pub fn check_cs(delta_k: &RicEstimate, theta_11: &RicEstimate, k: usize) -> bool {
    delta_k.value + k as f64 * theta_11.value < 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub gamma_hat: DenseMatrix,
    pub c1_residual: f64,
    pub c2_residual: f64,
    /// Spectral norm of the component of Γ orthogonal to Φ.
    pub c3_value: f64,
    /// Largest off-support magnitude of `RᵀΓ`.
    pub c4_value: f64,
    pub lambda: f64,
    pub valid: bool,
}

/// Checks the four optimality conditions for a candidate certificate `Γ`.
///
/// C1/C2 pass when their residuals are at most `tol_eq·‖UVᵀ‖_F` and
/// `tol_eq·λ√s` respectively; C3/C4 are strict inequalities.
pub fn verify_certificate(
    gamma: &DenseMatrix,
    spaces: &Subspaces,
    support: &SupportSet,
    sign_pattern: &DenseMatrix,
    r: &DenseMatrix,
    lambda: f64,
    tol_eq: f64,
) -> Result<CertificateReport> {
    check_conformable(spaces, support, r)?;
    if gamma.shape() != (spaces.rows(), spaces.cols()) || sign_pattern.shape() != (support.rows, support.cols) {
        return Err(shape_err(
            "verify_certificate",
            format!(
                "gamma {}x{}, signs {}x{}",
                spaces.rows(),
                spaces.cols(),
                support.rows,
                support.cols
            ),
            format!(
                "gamma {}x{}, signs {}x{}",
                gamma.rows(),
                gamma.cols(),
                sign_pattern.rows(),
                sign_pattern.cols()
            ),
        ));
    }
    let uv = spaces.uv();
    let c1 = (&proj_phi(gamma, spaces, false)? - &uv).frobenius();
    let rtg = &r.transpose() * gamma;
    let target = proj_omega(&sign_pattern.scale(lambda), support, false)?;
    let c2 = (&proj_omega(&rtg, support, false)? - &target).frobenius();
    let c3 = norm(&proj_phi(gamma, spaces, true)?, NormKind::Spectral);
    let c4 = proj_omega(&rtg, support, true)?.max_abs();
    let c1_ok = c1 <= tol_eq * uv.frobenius();
    let c2_ok = c2 <= tol_eq * lambda * (support.len() as f64).sqrt();
    Ok(CertificateReport {
        gamma_hat: gamma.clone(),
        c1_residual: c1,
        c2_residual: c2,
        c3_value: c3,
        c4_value: c4,
        lambda,
        valid: c1_ok && c2_ok && c3 < 1.0 && c4 < lambda,
    })
}

/// The least-norm system `A_Ω·vec(X) = b_Ω`, held through the SVD of
/// the explicitly assembled `A_Ω`.
///
/// Row `(i, j)` of the full operator is `vec(a_i·b_jᵀ)` with
/// `a_i = (I − P_U)·R·e_i` and `b_j = (I − P_V)·e_j`.
struct NormalSystem {
    pa: DenseMatrix,
    kb: DenseMatrix,
    factors: SvdFactors,
}

impl NormalSystem {
    fn new(spaces: &Subspaces, support: &SupportSet, r: &DenseMatrix) -> Result<Self> {
        let pa = spaces.perp_u_left(r);
        let kb = spaces.perp_v_right(&DenseMatrix::identity(spaces.cols()));
        let (l, t) = (spaces.rows(), spaces.cols());
        let idx = &support.indices;
        let a_omega = DenseMatrix::from_fn(idx.len(), l * t, |row, col| {
            let (i, j) = idx[row];
            pa.get(col / t, i) * kb.get(col % t, j)
        });
        let factors = svd(&a_omega, DEFAULT_RANK_TOL)?;
        let sigma_min = if idx.len() > l * t {
            0.0
        } else {
            factors.sigma.last().copied().unwrap_or(0.0)
        };
        if sigma_min < SINGULAR_CUTOFF {
            return Err(Error::RankDeficient(format!(
                "A_Ω is not full row rank (smallest singular value {sigma_min:.3e})"
            )));
        }
        Ok(Self { pa, kb, factors })
    }

    fn sigma_min(&self) -> f64 {
        self.factors.sigma.last().copied().unwrap_or(0.0)
    }

    /// `X_LN` as an L×T matrix: `A_Ωᵀ(A_Ω A_Ωᵀ)⁻¹·b = V·Σ⁻¹·Uᵀ·b`.
    fn least_norm(&self, b: &[f64]) -> DenseMatrix {
        let f = &self.factors;
        let (l, t) = (self.pa.rows(), self.kb.rows());
        let weights: Vec<f64> = (0..f.sigma.len())
            .map(|k| (0..b.len()).map(|i| f.u.get(i, k) * b[i]).sum::<f64>() / f.sigma[k])
            .collect();
        DenseMatrix::from_fn(l, t, |p, q| {
            let col = p * t + q;
            weights.iter().enumerate().map(|(k, w)| f.v.get(col, k) * w).sum()
        })
    }

    /// `M_k = Paᵀ·mat(v_k)·(I − P_V)`: entry `(i, j)` is the inner product
    /// of row `(i, j)` of the full operator with right singular vector k.
    fn projected_right_vectors(&self) -> Vec<DenseMatrix> {
        let (l, t) = (self.pa.rows(), self.kb.rows());
        let pat = self.pa.transpose();
        (0..self.factors.sigma.len())
            .map(|k| {
                let vk = DenseMatrix::from_fn(l, t, |p, q| self.factors.v.get(p * t + q, k));
                &(&pat * &vk) * &self.kb
            })
            .collect()
    }
}

/// Least-norm dual certificate `Γ̂ = UVᵀ + (I − P_U)·X_LN·(I − P_V)`,
/// verified at [`DEFAULT_TOL_EQ`].
pub fn build_certificate(
    spaces: &Subspaces,
    support: &SupportSet,
    sign_pattern: &DenseMatrix,
    r: &DenseMatrix,
    lambda: f64,
) -> Result<CertificateReport> {
    check_conformable(spaces, support, r)?;
    if sign_pattern.shape() != (support.rows, support.cols) {
        return Err(shape_err(
            "build_certificate",
            format!("sign pattern {}x{}", support.rows, support.cols),
            format!("{}x{}", sign_pattern.rows(), sign_pattern.cols()),
        ));
    }
    let uv = spaces.uv();
    let gamma = if support.is_empty() {
        uv
    } else {
        let sys = NormalSystem::new(spaces, support, r)?;
        let rtuv = &r.transpose() * &uv;
        let b: Vec<f64> = support
            .indices
            .iter()
            .map(|&(i, j)| lambda * sign_pattern.get(i, j) - rtuv.get(i, j))
            .collect();
        &uv + &sys.least_norm(&b)
    };
    verify_certificate(&gamma, spaces, support, sign_pattern, r, lambda, DEFAULT_TOL_EQ)
}

/// Measured quantities behind the certificate bounds, next to the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaBounds {
    /// σ_min(A_Ωᵀ)
    pub sigma_min_a_omega: f64,
    /// `c^{1/2}(1 − δ_k)^{1/2}(1 − μ)`
    pub lemma3_bound: f64,
    /// Spectral norm of `Q = A_Ω⊥·A_Ωᵀ·(A_Ω A_Ωᵀ)⁻¹`.
    pub q_spectral: f64,
    pub alpha_max: Option<f64>,
    /// Largest absolute row sum of `Q`.
    pub q_induced_inf: f64,
    pub beta_max: Option<f64>,
}

/// Assembles `A_Ω` and `Q` exactly and reports their norms against the
/// corresponding bounds (`omega_max` as from [`check_theorem1`]).
#[allow(clippy::too_many_arguments)]
pub fn lemma_bounds(
    spaces: &Subspaces,
    support: &SupportSet,
    r: &DenseMatrix,
    c: f64,
    delta_k: f64,
    mu: f64,
    omega_max: f64,
) -> Result<LemmaBounds> {
    check_conformable(spaces, support, r)?;
    let lemma3_bound = c.sqrt() * (1.0 - delta_k).max(0.0).sqrt() * (1.0 - mu);
    let alpha = alpha_max(c, delta_k, mu);
    let beta = beta_max(omega_max, mu, delta_k);
    if support.is_empty() {
        return Ok(LemmaBounds {
            sigma_min_a_omega: 0.0,
            lemma3_bound,
            q_spectral: 0.0,
            alpha_max: alpha,
            q_induced_inf: 0.0,
            beta_max: beta,
        });
    }
    let sys = NormalSystem::new(spaces, support, r)?;
    let m = sys.projected_right_vectors();
    let f = &sys.factors;
    let n = support.len();
    let mask = support.mask();
    // Row (i, j) of Q is Σ_k M_k[i, j]/σ_k · u_kᵀ; stream rows, accumulating
    // QᵀQ and the largest absolute row sum.
    let mut qtq = vec![0.0; n * n];
    let mut row_sum_max: f64 = 0.0;
    let mut q = vec![0.0; n];
    for i in 0..support.rows {
        for j in 0..support.cols {
            if mask[i * support.cols + j] {
                continue;
            }
            q.iter_mut().for_each(|v| *v = 0.0);
            for (k, mk) in m.iter().enumerate() {
                let w = mk.get(i, j) / f.sigma[k];
                for (b, qb) in q.iter_mut().enumerate() {
                    *qb += w * f.u.get(b, k);
                }
            }
            row_sum_max = row_sum_max.max(q.iter().map(|v| v.abs()).sum());
            for a in 0..n {
                for b in 0..n {
                    qtq[a * n + b] += q[a] * q[b];
                }
            }
        }
    }
    let qtq = DenseMatrix::new(n, n, qtq)?;
    let q_spectral = sym_eigenvalues(&qtq)?.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    Ok(LemmaBounds {
        sigma_min_a_omega: sys.sigma_min(),
        lemma3_bound,
        q_spectral,
        alpha_max: alpha,
        q_induced_inf: row_sum_max,
        beta_max: beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> DenseMatrix {
        DenseMatrix::from_fn(n, 1, |a, _| if a == i { 1.0 } else { 0.0 })
    }

    fn e1_spaces(l: usize, t: usize) -> Subspaces {
        Subspaces::new(e(l, 0), e(t, 0)).unwrap()
    }

    fn pair_r() -> DenseMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DenseMatrix::from_rows(&[vec![h, h]]).unwrap()
    }

    #[test]
    fn mu_trivial_cases() {
        let spaces = e1_spaces(3, 3);
        let r = DenseMatrix::identity(3);
        let off = SupportSet::new(3, 3, [(1, 1)]).unwrap();
        assert_eq!(coherence_mu(&spaces, &off, &r).unwrap(), 0.0);
        let on = SupportSet::new(3, 3, [(0, 0)]).unwrap();
        assert!((coherence_mu(&spaces, &on, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_of_identity() {
        let spaces = e1_spaces(3, 3);
        let r = DenseMatrix::identity(3);
        let support = SupportSet::new(3, 3, [(1, 1)]).unwrap();
        let inc = incoherence_params(&spaces, &support, &r).unwrap();
        assert_eq!(inc.gamma_u, 1.0);
        assert_eq!(inc.gamma_v, 1.0);
        assert_eq!(inc.gamma_r_u, 1.0);
        assert_eq!(inc.xi_r, 1.0);
        assert_eq!(inc.eta_r, 1.0);
    }

    #[test]
    fn zero_column_is_degenerate() {
        let spaces = e1_spaces(2, 2);
        let r = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let support = SupportSet::new(2, 2, [(0, 1)]).unwrap();
        assert!(matches!(
            incoherence_params(&spaces, &support, &r),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn ric_small_examples() {
        let id = DenseMatrix::identity(4);
        for k in 1..=4 {
            assert_eq!(ric_delta(&id, k, 1.0).unwrap().value, 0.0);
        }
        assert_eq!(ric_theta(&id, 1, 1, 1.0).unwrap().value, 0.0);

        let r = pair_r();
        assert!(ric_delta(&r, 1, 0.5).unwrap().value.abs() < 1e-12);
        assert!((ric_delta(&r, 2, 0.5).unwrap().value - 1.0).abs() < 1e-12);
        let theta = ric_theta(&r, 1, 1, 0.5).unwrap();
        assert!((theta.value - 1.0).abs() < 1e-12);
        assert_eq!(theta.subsets_examined, 2);
        let d1 = ric_delta(&r, 1, 0.5).unwrap();
        assert!(!check_cs(&d1, &theta, 1));
        assert!(check_cs(
            &ric_delta(&id, 2, 1.0).unwrap(),
            &ric_theta(&id, 1, 1, 1.0).unwrap(),
            2
        ));
    }

    #[test]
    fn ric_budget_is_enforced() {
        let r = DenseMatrix::identity(40);
        assert!(matches!(ric_delta(&r, 10, 1.0), Err(Error::Infeasible { .. })));
        assert!(matches!(ric_theta(&r, 5, 5, 1.0), Err(Error::Infeasible { .. })));
        assert!(ric_delta(&r, 0, 1.0).is_err());
    }

    #[test]
    fn best_c_centers_the_spectrum() {
        let r = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let est = ric_delta_best_c(&r, 1).unwrap();
        assert!((est.c - 2.5).abs() < 1e-12);
        assert!((est.value - 0.6).abs() < 1e-12);
    }

    fn ideal_inc() -> IncoherenceReport {
        IncoherenceReport {
            mu: 0.0,
            gamma_u: 0.0,
            gamma_v: 0.0,
            gamma_r_u: 0.0,
            xi_r: 0.0,
            eta_r: 1.0,
        }
    }

    fn ric(value: f64) -> RicEstimate {
        RicEstimate {
            kind: RicKind::Delta { k: 1 },
            c: 1.0,
            value,
            subsets_examined: 1,
            exact: true,
        }
    }

    #[test]
    fn sufficient_conditions_ideal_inputs() {
        let rep = check_theorem1(&ideal_inc(), &ric(0.0), &ric(0.0), &ric(0.0), 2, 4, 1, 1.0).unwrap();
        assert_eq!(rep.omega_max, 0.0);
        assert_eq!(rep.alpha_max, Some(0.0));
        assert_eq!(rep.beta_max, Some(0.0));
        assert!(rep.cond_i && rep.cond_ii);
        assert_eq!(rep.lambda_min, Some(0.0));
        assert!((rep.lambda_max.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sufficient_conditions_first_fails() {
        // Choose γ values so that ω_max = 0.1 with θ = δ₁ = 0, k = 1:
        // ω = √2·γ_R² + γ_V² + s·γ_R²·γ_V² with γ_R = 0, γ_V² = 0.1.
        let inc = IncoherenceReport {
            mu: 0.9,
            gamma_v: 0.1f64.sqrt(),
            ..ideal_inc()
        };
        let rep = check_theorem1(&inc, &ric(0.5), &ric(0.0), &ric(0.0), 1, 1, 1, 1.0).unwrap();
        assert!((rep.omega_max - 0.1).abs() < 1e-12);
        assert!(!rep.cond_i);
        assert!(!rep.cond_ii);
        assert_eq!(rep.beta_max, None);
    }

    #[test]
    fn pcp_conditions() {
        let rep = check_pcp(&ideal_inc(), 0.5, 1, 1, 1, 4, 4).unwrap();
        assert!((rep.omega_max - 0.25).abs() < 1e-15);
        assert!(rep.cond_i);
        let rep = check_pcp(&ideal_inc(), 2.0, 1, 1, 1, 4, 4).unwrap();
        assert!(rep.omega_max >= 1.0 && !rep.cond_i);
    }

    #[test]
    fn empty_support_certificate_is_uv() {
        let spaces = e1_spaces(3, 4);
        let r = DenseMatrix::identity(3);
        let support = SupportSet::empty(3, 4);
        let rep = build_certificate(&spaces, &support, &DenseMatrix::zeros(3, 4), &r, 0.3).unwrap();
        assert_eq!(rep.gamma_hat, spaces.uv());
        assert_eq!(rep.c1_residual, 0.0);
        assert_eq!(rep.c2_residual, 0.0);
    }

    #[test]
    fn single_entry_certificate() {
        let spaces = e1_spaces(3, 3);
        let r = DenseMatrix::identity(3);
        let support = SupportSet::new(3, 3, [(1, 1)]).unwrap();
        let signs = DenseMatrix::zeros(3, 3).with_entry(1, 1, 1.0);
        let rep = build_certificate(&spaces, &support, &signs, &r, 0.5).unwrap();
        // One equation Γ[1,1] = 0.5 with unit-norm row: X_LN = 0.5·e₂e₂ᵀ.
        let expected = spaces.uv().with_entry(1, 1, 0.5);
        assert!((&rep.gamma_hat - &expected).max_abs() < 1e-14);
        assert!(rep.c1_residual < 1e-14 && rep.c2_residual < 1e-14);
        assert!((rep.c3_value - 0.5).abs() < 1e-14);
        // UVᵀ itself puts a unit entry off the support, above λ.
        assert!((rep.c4_value - 1.0).abs() < 1e-14);
        assert!(!rep.valid);
    }

    #[test]
    fn scaled_uv_fails_c1() {
        let spaces = e1_spaces(3, 3);
        let r = DenseMatrix::identity(3);
        let support = SupportSet::new(3, 3, [(1, 1)]).unwrap();
        let signs = DenseMatrix::zeros(3, 3).with_entry(1, 1, 1.0);
        let rep = verify_certificate(&spaces.uv().scale(2.0), &spaces, &support, &signs, &r, 0.5, 1e-8).unwrap();
        assert!((rep.c1_residual - 1.0).abs() < 1e-15);
        assert!(!rep.valid);
    }

    #[test]
    fn lemma_bounds_trivial() {
        let spaces = e1_spaces(3, 3);
        let r = DenseMatrix::identity(3);
        let support = SupportSet::new(3, 3, [(1, 1)]).unwrap();
        let b = lemma_bounds(&spaces, &support, &r, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert!((b.sigma_min_a_omega - 1.0).abs() < 1e-14);
        assert_eq!(b.lemma3_bound, 1.0);

        let full = SupportSet::full(3, 3);
        let sp = Subspaces::new(DenseMatrix::zeros(3, 0), DenseMatrix::zeros(3, 0)).unwrap();
        let b = lemma_bounds(&sp, &full, &r, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(b.q_spectral, 0.0);
        assert_eq!(b.q_induced_inf, 0.0);
    }

    #[test]
    fn rank_deficient_system_is_reported() {
        let spaces = e1_spaces(2, 2);
        let r = DenseMatrix::identity(2);
        let support = SupportSet::new(2, 2, [(0, 0)]).unwrap();
        let signs = DenseMatrix::identity(2);
        assert!(matches!(
            build_certificate(&spaces, &support, &signs, &r, 0.5),
            Err(Error::RankDeficient(_))
        ));
    }
}
