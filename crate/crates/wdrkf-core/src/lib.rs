//! Distributionally robust Kalman filtering over Wasserstein ambiguity sets.
//!
//! The crate provides:
//!
//! - [`matops`]: dense symmetric/PSD kernels (eigendecomposition, matrix
//!   square roots, Bures/Gelbrich distances, Riccati fixed points, rank
//!   tests);
//! - [`drmmse`]: the worst-case MMSE program over Bures ambiguity balls,
//!   solved by Frank-Wolfe ascent with a closed-form linear maximization
//!   oracle and a duality-gap certificate;
//! - [`filters`]: time-varying and steady-state robust Kalman filters, the
//!   standard Kalman baselines, and a risk-sensitive baseline;
//! - [`convergence`]: the contraction machinery that certifies an ambiguity
//!   radius below which the time-varying filter converges to the
//!   steady-state one;
//! - [`sim`]: a seeded Monte Carlo engine for LQR tracking studies with
//!   Gaussian or U-quadratic noise and EM-based nominal estimation.

pub mod convergence;
pub mod drmmse;
pub mod error;
pub mod filters;
pub mod matops;
pub mod sim;

pub use convergence::{ContractionCertificate, DownsampledModel};
pub use drmmse::{GelbrichBall, LeastFavorable, SolveOptions, SolveReport};
pub use error::{Error, Result};
pub use filters::{GaussianBelief, NominalModel};
pub use matops::{PsdMatrix, SymMatrix};
