//! Norms, the SVD contract, thresholding operators and the two orthogonal
//! projectors (onto the low-rank tangent space and onto a support set).

use std::collections::BTreeSet;

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;

/// Default relative cutoff for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Thin singular value decomposition `m = u · diag(sigma) · vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
    pub rank_tol: f64,
}

impl SvdFactors {
    /// Number of singular values above `rank_tol · sigma[0]`.
    pub fn rank(&self) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > self.rank_tol * top).count()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        scaled_product(&self.u, &self.sigma, &self.v)
    }
}

/// `u · diag(weights) · vᵀ`, skipping zero weights.
fn scaled_product(u: &DenseMatrix, weights: &[f64], v: &DenseMatrix) -> DenseMatrix {
    let keep: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] != 0.0).collect();
    if keep.is_empty() {
        return DenseMatrix::zeros(u.rows(), v.rows());
    }
    let us = DenseMatrix::from_fn(u.rows(), keep.len(), |i, k| u.get(i, keep[k]) * weights[keep[k]]);
    let vk = v.select_cols(&keep);
    &us * &vk.transpose()
}

pub fn svd(m: &DenseMatrix, rank_tol: f64) -> Result<SvdFactors> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("svd of a non-finite matrix".into()));
    }
    let p = m.rows().min(m.cols());
    if p == 0 {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(m.rows(), 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(m.cols(), 0),
            rank_tol,
        });
    }
    let f = m
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("svd did not converge: {e:?}")))?;
    let s = f.S().column_vector();
    Ok(SvdFactors {
        u: DenseMatrix::from_faer(f.U().to_owned()),
        sigma: (0..p).map(|k| s[k].max(0.0)).collect(),
        v: DenseMatrix::from_faer(f.V().to_owned()),
        rank_tol,
    })
}

pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows().min(m.cols()) == 0 {
        return Ok(Vec::new());
    }
    m.as_faer()
        .singular_values()
        .map_err(|e| Error::Numeric(format!("svd did not converge: {e:?}")))
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues nondecreasing.
pub fn sym_eigen(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if m.rows() != m.cols() {
        return Err(shape_err(
            "sym_eigen",
            "square matrix",
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    if m.rows() == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let e = m
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..m.rows()).map(|k| s[k]).collect();
    Ok((vals, DenseMatrix::from_faer(e.U().to_owned())))
}

pub fn sym_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    m.as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))
}

/// Orthonormal basis of the column space of `m` (thin QR, `m` assumed full
/// column rank).
pub fn orthonormal_columns(m: &DenseMatrix) -> DenseMatrix {
    if m.cols() == 0 {
        return DenseMatrix::zeros(m.rows(), 0);
    }
    DenseMatrix::from_faer(m.as_faer().qr().compute_thin_Q())
}

/// Moore–Penrose pseudo-inverse through the SVD.
pub fn pinv(m: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    let f = svd(m, rank_tol)?;
    let r = f.rank();
    let inv: Vec<f64> = f
        .sigma
        .iter()
        .enumerate()
        .map(|(k, &s)| if k < r { 1.0 / s } else { 0.0 })
        .collect();
    Ok(scaled_product(&f.v, &inv, &f.u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Frobenius,
    /// Sum of absolute entries.
    L1Entrywise,
    /// Largest absolute entry.
    LinfEntrywise,
    Nuclear,
    Spectral,
    /// Induced ℓ1 norm: largest absolute column sum.
    InducedOne,
    /// Induced ℓ∞ norm: largest absolute row sum.
    InducedInf,
}

pub fn norm(m: &DenseMatrix, kind: NormKind) -> f64 {
    match kind {
        NormKind::Frobenius => m.frobenius(),
        NormKind::L1Entrywise => m.to_row_major().iter().map(|v| v.abs()).sum(),
        NormKind::LinfEntrywise => m.max_abs(),
        NormKind::Nuclear => singular_values(m).map(|s| s.iter().sum()).unwrap_or(f64::NAN),
        NormKind::Spectral => singular_values(m)
            .map(|s| s.first().copied().unwrap_or(0.0))
            .unwrap_or(f64::NAN),
        NormKind::InducedOne => (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::InducedInf => (0..m.rows())
            .map(|i| (0..m.cols()).map(|j| m.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and >= 0, got {tau}"
        )));
    }
    Ok(())
}

#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Entrywise soft thresholding `sign(m)·max(|m|−tau, 0)`.
pub fn soft_threshold(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    check_tau(tau)?;
    Ok(m.map(|v| shrink(v, tau)))
}

/// Singular value thresholding: the proximal map of `tau·‖·‖_*`.
pub fn svt(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    check_tau(tau)?;
    let f = svd(m, DEFAULT_RANK_TOL)?;
    let shrunk: Vec<f64> = f.sigma.iter().map(|&s| (s - tau).max(0.0)).collect();
    Ok(scaled_product(&f.u, &shrunk, &f.v))
}

/// `λmax([I R]ᵀ[I R]) = 1 + ‖R‖²`.
pub fn lipschitz_constant(r: &DenseMatrix) -> f64 {
    let s = norm(r, NormKind::Spectral);
    1.0 + s * s
}

/// Column and row spaces of a rank-r matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Subspaces {
    pub u_basis: DenseMatrix,
    pub v_basis: DenseMatrix,
}

fn orthonormality_defect(b: &DenseMatrix) -> f64 {
    let g = &b.transpose() * b;
    (&g - &DenseMatrix::identity(b.cols())).max_abs()
}

impl Subspaces {
    /// Wraps given bases after checking that both have orthonormal columns
    /// (within 1e-10) and the same count.
    pub fn new(u_basis: DenseMatrix, v_basis: DenseMatrix) -> Result<Self> {
        if u_basis.cols() != v_basis.cols() {
            return Err(shape_err(
                "Subspaces::new",
                format!("{} basis vectors", u_basis.cols()),
                format!("{}", v_basis.cols()),
            ));
        }
        if u_basis.cols() > u_basis.rows().min(v_basis.rows()) {
            return Err(Error::InvalidArgument("rank exceeds matrix dimensions".into()));
        }
        for (name, b) in [("u", &u_basis), ("v", &v_basis)] {
            let d = orthonormality_defect(b);
            if d > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "{name} basis columns are not orthonormal (defect {d:.2e})"
                )));
            }
        }
        Ok(Self { u_basis, v_basis })
    }

    /// Column/row spaces of `x` at numerical rank.
    pub fn from_matrix(x: &DenseMatrix, rank_tol: f64) -> Result<Self> {
        let f = svd(x, rank_tol)?;
        let keep: Vec<usize> = (0..f.rank()).collect();
        Ok(Self {
            u_basis: f.u.select_cols(&keep),
            v_basis: f.v.select_cols(&keep),
        })
    }

    pub fn rank(&self) -> usize {
        self.u_basis.cols()
    }

    pub fn rows(&self) -> usize {
        self.u_basis.rows()
    }

    pub fn cols(&self) -> usize {
        self.v_basis.rows()
    }

    pub fn proj_u(&self) -> DenseMatrix {
        &self.u_basis * &self.u_basis.transpose()
    }

    pub fn proj_v(&self) -> DenseMatrix {
        &self.v_basis * &self.v_basis.transpose()
    }

    /// `UVᵀ`.
    pub fn uv(&self) -> DenseMatrix {
        &self.u_basis * &self.v_basis.transpose()
    }

    /// `(I − P_U)·m`
    pub fn perp_u_left(&self, m: &DenseMatrix) -> DenseMatrix {
        m - &(&self.u_basis * &(&self.u_basis.transpose() * m))
    }

    /// `m·(I − P_V)`
    pub fn perp_v_right(&self, m: &DenseMatrix) -> DenseMatrix {
        m - &(&(m * &self.v_basis) * &self.v_basis.transpose())
    }
}

/// Index set of an `rows × cols` sparse pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pub rows: usize,
    pub cols: usize,
    /// Sorted by (row, col), no duplicates.
    pub indices: Vec<(usize, usize)>,
}

impl SupportSet {
    pub fn new(rows: usize, cols: usize, indices: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in indices {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "support index ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !set.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate support index ({i}, {j})")));
            }
        }
        Ok(Self {
            rows,
            cols,
            indices: set.into_iter().collect(),
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indices: Vec::new(),
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indices: (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect(),
        }
    }

    /// Exact nonzero pattern of `m`.
    pub fn of_nonzeros(m: &DenseMatrix) -> Self {
        let mut indices = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m.get(i, j) != 0.0 {
                    indices.push((i, j));
                }
            }
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for &(i, j) in &self.indices {
            mask[i * self.cols + j] = true;
        }
        mask
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.indices.binary_search(&(i, j)).is_ok()
    }

    /// Largest number of support entries in any single row.
    pub fn max_per_row(&self) -> usize {
        let mut counts = vec![0usize; self.rows];
        for &(i, _) in &self.indices {
            counts[i] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    /// Largest number of support entries in any single column.
    pub fn max_per_col(&self) -> usize {
        let mut counts = vec![0usize; self.cols];
        for &(_, j) in &self.indices {
            counts[j] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }
}

/// Orthogonal projection onto the tangent space
/// `Φ = {U W₁ᵀ + W₂ Vᵀ}` (or onto its complement).
pub fn proj_phi(m: &DenseMatrix, s: &Subspaces, complement: bool) -> Result<DenseMatrix> {
    if m.rows() != s.rows() || m.cols() != s.cols() {
        return Err(shape_err(
            "proj_phi",
            format!("{}x{}", s.rows(), s.cols()),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    let perp = s.perp_v_right(&s.perp_u_left(m));
    Ok(if complement { perp } else { m - &perp })
}

/// Keeps the entries on the support (or off it) and zeros the rest.
pub fn proj_omega(m: &DenseMatrix, s: &SupportSet, complement: bool) -> Result<DenseMatrix> {
    if m.shape() != (s.rows, s.cols) {
        return Err(shape_err(
            "proj_omega",
            format!("{}x{}", s.rows, s.cols),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    let mask = s.mask();
    Ok(DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        if mask[i * s.cols + j] != complement {
            m.get(i, j)
        } else {
            0.0
        }
    }))
}
