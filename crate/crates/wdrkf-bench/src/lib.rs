//! Shared fixtures for the criterion benchmarks.

use nalgebra::DMatrix;
use wdrkf_core::{NominalModel, PsdMatrix};

/// The 2D convergence benchmark system.
pub fn benchmark_model() -> NominalModel {
    NominalModel::zero_mean(
        DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 1.2]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        PsdMatrix::identity(2),
        PsdMatrix::identity(1),
        PsdMatrix::identity(2),
    )
    .expect("benchmark model is valid")
}

/// Deterministic dense PSD matrix of the given dimension.
pub fn seeded_psd(dim: usize, seed: u64) -> PsdMatrix {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let g = DMatrix::from_fn(dim, dim, |_, _| next());
    PsdMatrix::from_matrix(&g * g.transpose() + DMatrix::identity(dim, dim) * 0.4)
        .expect("shifted Gram matrices are positive definite")
}
