//! True-noise specifications and reproducible per-run random streams.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matops::{sqrtm_raw, PsdMatrix};

/// Distribution of one noise source.
#[derive(Debug, Clone)]
pub enum NoiseSpec {
    Gaussian {
        mean: DVector<f64>,
        cov: PsdMatrix,
    },
    /// Independent coordinates, each U-quadratic on `[lo_i, hi_i]` (density
    /// proportional to the squared distance from the interval midpoint).
    UQuadratic {
        lo: DVector<f64>,
        hi: DVector<f64>,
    },
}

impl NoiseSpec {
    pub fn gaussian(mean: DVector<f64>, cov: PsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Dimension("mean/covariance length mismatch".into()));
        }
        Ok(Self::Gaussian { mean, cov })
    }

    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Result<Self> {
        Self::gaussian(
            DVector::zeros(dim),
            PsdMatrix::scaled_identity(dim, variance)?,
        )
    }

    pub fn u_quadratic(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("bound length mismatch".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(&l, &h)| l >= h || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Invalid(
                "each lower bound must be strictly below its upper bound".into(),
            ));
        }
        Ok(Self::UQuadratic { lo, hi })
    }

    pub fn u_quadratic_cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::u_quadratic(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    /// Zero noise (a point mass at the origin).
    pub fn zero(dim: usize) -> Self {
        Self::Gaussian {
            mean: DVector::zeros(dim),
            cov: PsdMatrix::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::UQuadratic { lo, .. } => lo.len(),
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> DVector<f64> {
        match self {
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::UQuadratic { lo, hi } => (lo + hi) * 0.5,
        }
    }

    /// Covariance of the distribution. The U-quadratic variance per
    /// coordinate is `3 (hi - lo)^2 / 20`.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Self::Gaussian { cov, .. } => cov.as_matrix().clone(),
            Self::UQuadratic { lo, hi } => {
                let d = lo.len();
                DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        3.0 * (hi[i] - lo[i]).powi(2) / 20.0
                    } else {
                        0.0
                    }
                })
            }
        }
    }
}

/// Draws one sample. Gaussian sampling uses a Cholesky factor (eigenvalue
/// square root for singular covariances); U-quadratic sampling uses the
/// inverse CDF `x = b + cbrt(3u/alpha - (b - lo)^3)` per coordinate.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> DVector<f64> {
    match spec {
        NoiseSpec::Gaussian { mean, cov } => {
            let n = mean.len();
            let factor = Cholesky::new(cov.as_matrix().clone())
                .map(|ch| ch.l())
                .unwrap_or_else(|| {
                    sqrtm_raw(cov.as_matrix()).expect("validated PSD covariance has a square root")
                });
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + factor * z
        }
        NoiseSpec::UQuadratic { lo, hi } => DVector::from_fn(lo.len(), |i, _| {
            let beta = 0.5 * (lo[i] + hi[i]);
            let alpha = 12.0 / (hi[i] - lo[i]).powi(3);
            let u: f64 = rng.random();
            beta + (3.0 * u / alpha - (beta - lo[i]).powi(3)).cbrt()
        }),
    }
}

/// Independent random streams within one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Calibration = 0,
    Process = 1,
    Measurement = 2,
    Init = 3,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream keyed by `(master_seed, run_index, stream)`, so
/// parallel runs reproduce serial results exactly.
pub fn run_stream(master_seed: u64, run_index: u64, stream: StreamId) -> ChaCha12Rng {
    let mut state = master_seed;
    let a = splitmix64(&mut state);
    let mut state = a ^ run_index;
    let b = splitmix64(&mut state);
    let mut state = b ^ (stream as u64);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
