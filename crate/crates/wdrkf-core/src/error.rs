//! Crate-wide error type.

use thiserror::Error;

use crate::drmmse::LeastFavorable;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, tolerance {tol:.3e})")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:.3e}, tolerance {tol:.3e})")]
    NotPd { min_eig: f64, tol: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error(
        "worst-case solver stopped after {iters} iterations with gap {gap:.3e} above tolerance"
    )]
    SolverStalled {
        iters: usize,
        gap: f64,
        last: Box<LeastFavorable>,
    },

    #[error("risk sensitivity parameter too large at step {step}")]
    RiskTooLarge { step: usize },

    #[error("perturbation matrix violates the contraction bound: {0}")]
    InfeasiblePhi(String),

    #[error("ambiguity radius certification failed: {0}")]
    Certification(String),

    #[error("model assumption violated: {0}")]
    Assumption(String),
}
