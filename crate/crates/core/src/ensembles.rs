//! Seeded random ensembles: low-rank matrices, sparse matrices and
//! compression matrices.
//!
//! All generators draw from ChaCha8 seeded with [`rng`]; the same seed and
//! parameters give bit-identical matrices within one build.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::matcore::{orthonormal_columns, svd, Subspaces, SupportSet, DEFAULT_RANK_TOL};
use crate::matrix::DenseMatrix;

pub type RngSeed = u64;

pub fn rng(seed: RngSeed) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th job derived from a base seed.
pub fn derived_seed(base: RngSeed, index: u64) -> RngSeed {
    base.wrapping_add(index)
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, sd: f64, rng: &mut impl Rng) -> DenseMatrix {
    // Draw in row-major order so the stream layout matches the CSV layout.
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let z: f64 = rng.sample(StandardNormal);
        entries.push(sd * z);
    }
    DenseMatrix::new(rows, cols, entries).expect("gaussian draws are finite")
}

/// The two factors of the bilinear model `X₀ = W·Zᵀ`.
#[derive(Clone, Debug)]
pub struct BilinearFactors {
    /// L×r, entries N(0, 1/L).
    pub w: DenseMatrix,
    /// T×r, entries N(0, 1/T).
    pub z: DenseMatrix,
}

pub fn bilinear_factors(l: usize, t: usize, r: usize, seed: RngSeed) -> Result<BilinearFactors> {
    if r > l.min(t) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds min({l}, {t})")));
    }
    let mut g = rng(seed);
    let w = gaussian_matrix(l, r, (1.0 / l as f64).sqrt(), &mut g);
    let z = gaussian_matrix(t, r, (1.0 / t as f64).sqrt(), &mut g);
    Ok(BilinearFactors { w, z })
}

/// `W·Zᵀ` with Gaussian factors; rank `r` almost surely.
pub fn gen_bilinear_lowrank(l: usize, t: usize, r: usize, seed: RngSeed) -> Result<DenseMatrix> {
    let f = bilinear_factors(l, t, r, seed)?;
    if r == 0 {
        return Ok(DenseMatrix::zeros(l, t));
    }
    Ok(&f.w * &f.z.transpose())
}

/// Random orthogonal model: `U·diag(σ)·Vᵀ` with `U`, `V` drawn uniformly
/// from the rank-r partial isometries (QR of Gaussian matrices).
pub fn gen_random_orthogonal_lowrank(
    l: usize,
    f: usize,
    r: usize,
    singular_values: &[f64],
    seed: RngSeed,
) -> Result<(DenseMatrix, Subspaces)> {
    if r > l.min(f) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds min({l}, {f})")));
    }
    if singular_values.len() != r || singular_values.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "need {r} positive singular values, got {singular_values:?}"
        )));
    }
    let mut g = rng(seed);
    let u = orthonormal_columns(&gaussian_matrix(l, r, 1.0, &mut g));
    let v = orthonormal_columns(&gaussian_matrix(f, r, 1.0, &mut g));
    let us = DenseMatrix::from_fn(l, r, |i, k| u.get(i, k) * singular_values[k]);
    let x = &us * &v.transpose();
    Ok((x, Subspaces::new(u, v)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    /// Each entry nonzero independently with probability `pi`.
    Bernoulli(f64),
    /// Exactly `s` positions chosen uniformly without replacement.
    Uniform(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amplitude {
    /// ±1 with equal probability.
    Signs,
    /// Normal(0, sd²).
    Gaussian(f64),
}

fn draw_amplitude(amp: Amplitude, g: &mut impl Rng) -> f64 {
    match amp {
        Amplitude::Signs => {
            if g.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        Amplitude::Gaussian(sd) => loop {
            let z: f64 = g.sample(StandardNormal);
            if z != 0.0 {
                break sd * z;
            }
        },
    }
}

/// Sparse `F×T` matrix and its exact support.
pub fn gen_sparse(
    f: usize,
    t: usize,
    mode: SparsityMode,
    amplitude: Amplitude,
    seed: RngSeed,
) -> Result<(DenseMatrix, SupportSet)> {
    if let Amplitude::Gaussian(sd) = amplitude {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gaussian amplitude sd must be > 0, got {sd}"
            )));
        }
    }
    let mut g = rng(seed);
    let mut positions: Vec<usize> = match mode {
        SparsityMode::Bernoulli(pi) => {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::InvalidArgument(format!("probability {pi} outside [0, 1]")));
            }
            (0..f * t).filter(|_| g.random::<f64>() < pi).collect()
        }
        SparsityMode::Uniform(s) => {
            if s > f * t {
                return Err(Error::InvalidArgument(format!("support size {s} exceeds {}", f * t)));
            }
            index::sample(&mut g, f * t, s).into_vec()
        }
    };
    positions.sort_unstable();
    let mut entries = vec![0.0; f * t];
    for &p in &positions {
        entries[p] = draw_amplitude(amplitude, &mut g);
    }
    let support = SupportSet {
        rows: f,
        cols: t,
        indices: positions.iter().map(|&p| (p / t, p % t)).collect(),
    };
    Ok((DenseMatrix::new(f, t, entries)?, support))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Orthonormal DCT-II, entries bounded by `sqrt(2/f)`.
    Dct,
    /// Normalized Walsh–Hadamard, `f` must be a power of two.
    Hadamard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    Identity,
    /// Right singular vectors of an i.i.d. Bernoulli(1/2) `L×F` matrix.
    BernoulliSvd,
    /// Block diagonal, each block `ell` distinct rows of an `f×f` bounded
    /// orthonormal transform.
    BlockBounded {
        ell: usize,
        f: usize,
        transform: Transform,
    },
}

/// Orthonormal `f×f` transform (rows are the basis vectors).
pub fn transform_matrix(f: usize, transform: Transform) -> Result<DenseMatrix> {
    match transform {
        Transform::Dct => {
            let n = f as f64;
            Ok(DenseMatrix::from_fn(f, f, |k, j| {
                let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                s * (std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / n).cos()
            }))
        }
        Transform::Hadamard => {
            if !f.is_power_of_two() {
                return Err(Error::InvalidArgument(format!(
                    "Hadamard size {f} is not a power of two"
                )));
            }
            let s = 1.0 / (f as f64).sqrt();
            Ok(DenseMatrix::from_fn(f, f, |i, j| {
                if (i & j).count_ones() % 2 == 0 {
                    s
                } else {
                    -s
                }
            }))
        }
    }
}

/// `L×F` compression matrix.
pub fn gen_compression(l: usize, f: usize, mode: CompressionMode, seed: RngSeed) -> Result<DenseMatrix> {
    if l > f || l == 0 {
        return Err(Error::InvalidArgument(format!("need 0 < L <= F, got L={l}, F={f}")));
    }
    match mode {
        CompressionMode::Identity => {
            if l != f {
                return Err(Error::InvalidArgument(format!(
                    "identity compression needs L = F, got {l} != {f}"
                )));
            }
            Ok(DenseMatrix::identity(l))
        }
        CompressionMode::BernoulliSvd => {
            let mut g = rng(seed);
            let b = DenseMatrix::from_fn(l, f, |_, _| if g.random::<bool>() { 1.0 } else { 0.0 });
            let fac = svd(&b, DEFAULT_RANK_TOL)?;
            if fac.rank() < l {
                return Err(Error::RankDeficient(format!(
                    "Bernoulli draw has rank {} < {l}",
                    fac.rank()
                )));
            }
            Ok(fac.v.transpose())
        }
        CompressionMode::BlockBounded {
            ell,
            f: block,
            transform,
        } => {
            if block == 0 || f % block != 0 || ell > block || ell * (f / block) != l {
                return Err(Error::InvalidArgument(format!(
                    "block layout ell={ell}, f={block} incompatible with L={l}, F={f}"
                )));
            }
            let psi = transform_matrix(block, transform)?;
            let mut g = rng(seed);
            let mut out = DenseMatrix::zeros(l, f).into_faer();
            for b in 0..f / block {
                let mut rows = index::sample(&mut g, block, ell).into_vec();
                rows.sort_unstable();
                for (k, &row) in rows.iter().enumerate() {
                    for j in 0..block {
                        out[(b * ell + k, b * block + j)] = psi.get(row, j);
                    }
                }
            }
            Ok(DenseMatrix::from_faer(out))
        }
    }
}

/// Observation pair with its generating components.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x0: DenseMatrix,
    pub a0: DenseMatrix,
    pub r: DenseMatrix,
    pub y: DenseMatrix,
    pub support: SupportSet,
    pub spaces: Subspaces,
}

impl GroundTruth {
    /// `sign(A₀)` on the support.
    pub fn sign_pattern(&self) -> DenseMatrix {
        self.a0.map(f64::signum).map(|v| if v.is_nan() { 0.0 } else { v })
    }
}

/// `Y = X₀ + R·A₀ + E` with `E` i.i.d. Normal(0, noise_sd²).
pub fn synthesize_observation(
    x0: &DenseMatrix,
    a0: &DenseMatrix,
    r: &DenseMatrix,
    noise_sd: f64,
    seed: RngSeed,
) -> Result<GroundTruth> {
    if r.rows() != x0.rows() || r.cols() != a0.rows() || x0.cols() != a0.cols() {
        return Err(shape_err(
            "synthesize_observation",
            "x0 L×T, a0 F×T, r L×F",
            format!(
                "x0 {}x{}, a0 {}x{}, r {}x{}",
                x0.rows(),
                x0.cols(),
                a0.rows(),
                a0.cols(),
                r.rows(),
                r.cols()
            ),
        ));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let mut y = x0 + &(r * a0);
    if noise_sd > 0.0 {
        let e = gaussian_matrix(y.rows(), y.cols(), noise_sd, &mut rng(seed));
        y = &y + &e;
    }
    Ok(GroundTruth {
        x0: x0.clone(),
        a0: a0.clone(),
        r: r.clone(),
        y,
        support: SupportSet::of_nonzeros(a0),
        spaces: Subspaces::from_matrix(x0, DEFAULT_RANK_TOL)?,
    })
}

fn check_permutation(perm: &[usize], n: usize, what: &str) -> Result<()> {
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {}, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument(format!("{what} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Row `i` of the output is row `perm[i]` of `m`.
pub fn permute_rows(m: &DenseMatrix, perm: &[usize]) -> Result<DenseMatrix> {
    check_permutation(perm, m.rows(), "row permutation")?;
    Ok(m.select_rows(perm))
}

/// `(Π_r·Y, Π_r·R·Π_c)`: solving on the transformed pair recovers
/// `Π_r·X₀` and `Π_cᵀ·A₀`.
pub fn permute_transform(
    y: &DenseMatrix,
    r: &DenseMatrix,
    row_perm: &[usize],
    col_perm: &[usize],
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_permutation(row_perm, r.rows(), "row permutation")?;
    check_permutation(col_perm, r.cols(), "column permutation")?;
    if y.rows() != r.rows() {
        return Err(shape_err(
            "permute_transform",
            format!("{} rows in y", r.rows()),
            format!("{}", y.rows()),
        ));
    }
    Ok((y.select_rows(row_perm), r.select_rows(row_perm).select_cols(col_perm)))
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation(n: usize, seed: RngSeed) -> Vec<usize> {
    index::sample(&mut rng(seed), n, n).into_vec()
}
