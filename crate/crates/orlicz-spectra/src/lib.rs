//! Numerical eigensolver for the Dirichlet eigenvalue problem of the
//! fractional m-Laplacian, posed over Orlicz-Sobolev energies that need not
//! satisfy the doubling (Delta-2) condition.
//!
//! The crate is organized around the constructive skeleton of the problem:
//!
//! * [`young`] — pointwise Young-function algebra (densities, primitives,
//!   conjugation, doubling diagnostics) and growth functions for the
//!   right-hand side.
//! * [`orlicz`] — modulars and Luxemburg norms over discrete measures.
//! * [`mesh`] — 1D domains, nested hat-function bases, Holder quotients and
//!   the graded quadrature for the singular pair measure `dx dy / |x-y|`.
//! * [`operator`] — assembly of the energy modular, the potential, their
//!   Galerkin gradients and the weak-form residual.
//! * [`solver`] — constrained eigensolver: normalization to the unit energy
//!   manifold, first eigenpair by constrained maximization, higher minimax
//!   levels by subspace-sphere optimization, and continuation in the basis
//!   dimension.
//! * [`validate`] — independent oracles (dense generalized eigensolver for
//!   the quadratic case) and randomized inequality batteries, including the
//!   translation estimates that drive compactness.
//! * [`config`] / [`cli`] — run configuration and the file-based front end.
//!
//! Every solver-facing quantity is deterministic under a fixed RNG seed.

pub mod cli;
pub mod config;
mod linalg;
pub mod mesh;
pub mod operator;
pub mod orlicz;
pub mod solver;
pub mod validate;
pub mod young;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    /// A precondition on user-supplied data failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A minimax level was requested beyond the basis dimension.
    #[error("level {level} exceeds dimension {dim}: the candidate family is empty")]
    LevelExceedsDimension { level: usize, dim: usize },
    /// An iterative solve did not reach its tolerance.
    #[error("convergence failure: {message}")]
    Convergence {
        message: String,
        /// Best iterate found before giving up, when one exists.
        best: Option<Box<solver::Eigenpair>>,
    },
    /// Configuration file problems (parse errors, inconsistent fields).
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
