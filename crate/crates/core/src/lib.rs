//! Recovery of a low-rank matrix `X₀` and a sparse matrix `A₀` from
//! compressed observations `Y = X₀ + R·A₀`.
//!
//! The crate is organised around the pieces of that problem:
//!
//! - [`matrix`] / [`matcore`]: dense matrices, norms, SVD, thresholding and
//!   the projectors onto the low-rank tangent space and onto a support set.
//! - [`ensembles`]: seeded generators for low-rank, sparse and compression
//!   matrices.
//! - [`solvers`]: accelerated proximal gradient and ADMM solvers for
//!   `min ‖X‖_* + λ‖A‖₁ s.t. Y = X + RA`, plus the LS-PCP baseline.
//! - [`diagnostics`]: incoherence parameters, restricted isometry constants,
//!   sufficient-condition checks and dual certificates.
//! - [`netanomaly`]: routing matrices on random geometric graphs, traffic
//!   synthesis, anomaly scoring and ROC curves.
//! - [`expharness`]: batch experiments (phase grids, compression sweeps,
//!   baseline comparisons).

pub mod diagnostics;
pub mod ensembles;
pub mod error;
pub mod expharness;
pub mod matcore;
pub mod matrix;
pub mod netanomaly;
pub mod solvers;

pub use error::{Error, Result};
pub use matcore::{NormKind, Subspaces, SupportSet, SvdFactors};
pub use matrix::DenseMatrix;
