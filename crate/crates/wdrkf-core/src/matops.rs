//! Dense symmetric/PSD matrix kernels.
//!
//! Everything downstream (worst-case solvers, filters, certification) works
//! with small dense symmetric matrices. This module wraps them in two
//! newtypes, [`SymMatrix`] and [`PsdMatrix`], and provides the shared
//! kernels: eigendecomposition, PSD square roots, Bures/Gelbrich distances,
//! Riccati steps and their fixed points, and controllability/observability
//! rank tests.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance below which a negative eigenvalue still counts as zero.
///
/// Matrices assembled from products of square roots pick up roundoff of this
/// order, so PSD acceptance uses `eig >= -psd_tolerance(m)` and square roots
/// clamp eigenvalues in `[-tol, 0)` to zero.
pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + m.norm())
}

/// Singular values below `RANK_TOL * sigma_max` count as zero in rank tests.
pub const RANK_TOL: f64 = 1e-8;

/// A real symmetric matrix, symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix as `(M + M^T)/2`. Requires a square matrix
    /// of dimension at least one with finite entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("matrix has non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn fro_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Definiteness classification of a [`PsdMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    /// All eigenvalues at least `-psd_tolerance`.
    Psd,
    /// All eigenvalues strictly above `psd_tolerance`.
    Pd,
}

/// A positive semidefinite matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    base: SymMatrix,
    definiteness: Definiteness,
}

impl PsdMatrix {
    /// Validates positive semidefiniteness and classifies definiteness.
    pub fn new(base: SymMatrix) -> Result<Self> {
        let (vals, _) = sym_eig(&base)?;
        let tol = psd_tolerance(base.as_matrix());
        let min_eig = vals[base.dim() - 1];
        if min_eig < -tol {
            return Err(Error::NotPsd { min_eig, tol });
        }
        let definiteness = if min_eig > tol {
            Definiteness::Pd
        } else {
            Definiteness::Psd
        };
        Ok(Self { base, definiteness })
    }

    /// Like [`PsdMatrix::new`] but rejects matrices that are not strictly
    /// positive definite.
    pub fn new_pd(base: SymMatrix) -> Result<Self> {
        let p = Self::new(base)?;
        if !p.is_pd() {
            let (vals, _) = sym_eig(&p.base)?;
            return Err(Error::NotPd {
                min_eig: vals[p.dim() - 1],
                tol: psd_tolerance(p.as_matrix()),
            });
        }
        Ok(p)
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            base: SymMatrix::identity(dim),
            definiteness: Definiteness::Pd,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            base: SymMatrix::zeros(dim),
            definiteness: Definiteness::Psd,
        }
    }

    /// Diagonal PSD matrix; all entries must be nonnegative.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Invalid(
                "diagonal of a PSD matrix must be nonnegative and finite".into(),
            ));
        }
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::from_diagonal(&vec![scale; dim])
    }

    pub fn is_pd(&self) -> bool {
        self.definiteness == Definiteness::Pd
    }

    pub fn definiteness(&self) -> Definiteness {
        self.definiteness
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.base.as_matrix()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.base.into_matrix()
    }

    pub fn trace(&self) -> f64 {
        self.base.trace()
    }

    pub fn fro_norm(&self) -> f64 {
        self.base.fro_norm()
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues sorted descending and the matching orthonormal
/// eigenvector basis so that `M = V diag(vals) V^T`.
pub fn sym_eig(m: &SymMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.dim();
    let se = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, 200 * n.max(8))
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    let ortho_residual = (vecs.transpose() * &vecs - DMatrix::identity(n, n)).norm();
    if ortho_residual > 1e-10 * n as f64 {
        return Err(Error::Numerical(format!(
            "eigenvector basis lost orthonormality (residual {ortho_residual:.3e})"
        )));
    }
    Ok((vals, vecs))
}

pub(crate) fn sym_eigvals_raw(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let sym = SymMatrix::new(m.clone())?;
    Ok(sym_eig(&sym)?.0)
}

pub(crate) fn min_eig_raw(m: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigvals_raw(m)?;
    Ok(vals[vals.len() - 1])
}

pub(crate) fn max_eig_raw(m: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigvals_raw(m)?[0])
}

/// Square root of a PSD matrix via eigendecomposition; eigenvalues in
/// `[-tol, 0)` are clamped to zero before the root.
pub fn sqrtm_psd(m: &PsdMatrix) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(sqrtm_raw(m.as_matrix())?)
}

pub(crate) fn sqrtm_raw(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = SymMatrix::new(m.clone())?;
    let (vals, vecs) = sym_eig(&sym)?;
    let tol = psd_tolerance(m);
    let min_eig = vals[vals.len() - 1];
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig, tol });
    }
    let roots = vals.map(|v| v.max(0.0).sqrt());
    let s = &vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// `Tr[sqrt(M)]` for PSD `M`, with the same clamping as [`sqrtm_psd`].
fn trace_sqrtm_raw(m: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigvals_raw(m)?;
    let tol = psd_tolerance(m);
    if vals[vals.len() - 1] < -tol {
        return Err(Error::NotPsd {
            min_eig: vals[vals.len() - 1],
            tol,
        });
    }
    Ok(vals.iter().map(|&v| v.max(0.0).sqrt()).sum())
}

/// Squared Bures-Wasserstein distance between PSD matrices, clamped at zero.
pub(crate) fn bures_sq_raw(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    if s1 == s2 {
        return Ok(0.0);
    }
    let r2 = sqrtm_raw(s2)?;
    let inner = &r2 * s1 * &r2;
    let cross = trace_sqrtm_raw(&inner)?;
    Ok((s1.trace() + s2.trace() - 2.0 * cross).max(0.0))
}

/// Bures-Wasserstein distance between covariance matrices:
/// `(Tr[S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}])^{1/2}`.
pub fn bures_distance(sigma1: &PsdMatrix, sigma2: &PsdMatrix) -> Result<f64> {
    if sigma1.dim() != sigma2.dim() {
        return Err(Error::Dimension(format!(
            "Bures distance needs equal dimensions, got {} and {}",
            sigma1.dim(),
            sigma2.dim()
        )));
    }
    Ok(bures_sq_raw(sigma1.as_matrix(), sigma2.as_matrix())?.sqrt())
}

/// 2-Wasserstein distance between Gaussians via the Gelbrich formula:
/// `sqrt(||mu1 - mu2||^2 + bures(S1, S2)^2)`.
pub fn gelbrich_w2(
    mu1: &DVector<f64>,
    sigma1: &PsdMatrix,
    mu2: &DVector<f64>,
    sigma2: &PsdMatrix,
) -> Result<f64> {
    if mu1.len() != mu2.len() || mu1.len() != sigma1.dim() {
        return Err(Error::Dimension(
            "mean/covariance dimensions are inconsistent".into(),
        ));
    }
    let b = bures_distance(sigma1, sigma2)?;
    Ok(((mu1 - mu2).norm_squared() + b * b).sqrt())
}

/// Cholesky-based inverse of a positive definite matrix.
pub(crate) fn pd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("matrix is singular or not positive definite".into()))
}

/// One step of the standard (information-form) Riccati recursion:
/// `A ((S^-)^{-1} + C^T Sv^{-1} C)^{-1} A^T + Sw`.
pub(crate) fn riccati_step_raw(
    sigma_prior: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    sigma_v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let info = pd_inverse(sigma_prior)? + c.transpose() * pd_inverse(sigma_v)? * c;
    let mid = pd_inverse(&info)?;
    let out = a * mid * a.transpose() + sigma_w;
    Ok((&out + out.transpose()) * 0.5)
}

/// Standard Riccati step for a filter covariance (measurement update followed
/// by prediction). Requires `sigma_prior` and `sigma_v` positive definite.
pub fn riccati_step(
    sigma_prior: &PsdMatrix,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: &PsdMatrix,
    sigma_v: &PsdMatrix,
) -> Result<PsdMatrix> {
    let n = sigma_prior.dim();
    if a.nrows() != n || a.ncols() != n || c.ncols() != n || sigma_w.dim() != n {
        return Err(Error::Dimension("Riccati step dimensions mismatch".into()));
    }
    if c.nrows() != sigma_v.dim() {
        return Err(Error::Dimension(
            "measurement matrix rows must match noise covariance".into(),
        ));
    }
    PsdMatrix::from_matrix(riccati_step_raw(
        sigma_prior.as_matrix(),
        a,
        c,
        sigma_w.as_matrix(),
        sigma_v.as_matrix(),
    )?)
}

/// Fixed point of [`riccati_step`], iterated from `sigma_w` so every iterate
/// stays positive definite. Stops once
/// `||r(S) - S||_F <= tol * (1 + ||S||_F)` and returns that `S`.
pub fn dare_fixed_point(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: &PsdMatrix,
    sigma_v: &PsdMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<PsdMatrix> {
    let mut sigma = sigma_w.as_matrix().clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_step_raw(&sigma, a, c, sigma_w.as_matrix(), sigma_v.as_matrix())?;
        residual = (&next - &sigma).norm();
        if residual <= tol * (1.0 + sigma.norm()) {
            return PsdMatrix::from_matrix(sigma);
        }
        sigma = next;
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual,
    })
}

fn rank_via_svd(m: &DMatrix<f64>) -> usize {
    let svals = m.clone().singular_values();
    let smax = svals.max();
    if smax <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Controllability of `(A, Sw^{1/2})` and observability of `(A, C)` via
/// numerical rank of the stacked block matrices.
pub fn check_ctrb_obsv(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma_w: &PsdMatrix,
) -> Result<(bool, bool)> {
    let n = a.nrows();
    if a.ncols() != n || c.ncols() != n || sigma_w.dim() != n {
        return Err(Error::Dimension(
            "controllability/observability test dimensions mismatch".into(),
        ));
    }
    let g = sqrtm_raw(sigma_w.as_matrix())?;
    let ny = c.nrows();

    let mut ctrb = DMatrix::zeros(n, n * n);
    let mut obsv = DMatrix::zeros(n * ny, n);
    let mut apow = DMatrix::identity(n, n);
    for k in 0..n {
        ctrb.view_mut((0, k * n), (n, n)).copy_from(&(&apow * &g));
        obsv.view_mut((k * ny, 0), (ny, n)).copy_from(&(c * &apow));
        apow = &apow * a;
    }
    Ok((rank_via_svd(&ctrb) == n, rank_via_svd(&obsv) == n))
}

/// Spectral radius of a (not necessarily symmetric) square matrix.
pub(crate) fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_sym(n: usize, rng: &mut impl Rng) -> SymMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        SymMatrix::new(m).unwrap()
    }

    fn random_psd(n: usize, rng: &mut impl Rng) -> PsdMatrix {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        PsdMatrix::from_matrix(&g * g.transpose()).unwrap()
    }

    #[test]
    fn sym_eig_identity() {
        let (vals, vecs) = sym_eig(&SymMatrix::identity(3)).unwrap();
        for v in vals.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let ortho = (vecs.transpose() * &vecs - DMatrix::identity(3, 3)).norm();
        assert!(ortho < 1e-12);
    }

    #[test]
    fn sym_eig_diagonal_sorts_descending() {
        let m = SymMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])))
            .unwrap();
        let (vals, vecs) = sym_eig(&m).unwrap();
        assert!((vals[0] - 4.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // eigenvectors are signed standard basis vectors
        for col in 0..2 {
            let v = vecs.column(col);
            let biggest = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!((biggest - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sym_eig_reconstructs_random_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = random_sym(5, &mut rng);
        let (vals, vecs) = sym_eig(&m).unwrap();
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - m.as_matrix()).norm() < 1e-10);
    }

    #[test]
    fn symmetrization_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.7, 2.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], s.as_matrix()[(1, 0)]);
    }

    #[test]
    fn psd_classification() {
        let pd = PsdMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        assert!(pd.is_pd());
        let psd = PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        assert!(!psd.is_pd());
        let not = PsdMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, -1.0,
        ])));
        assert!(matches!(not, Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrtm_identity_and_diagonal() {
        let s = sqrtm_psd(&PsdMatrix::identity(3)).unwrap();
        assert!((s.as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-12);

        let d = PsdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = sqrtm_psd(&d).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((r.as_matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let m = random_psd(4, &mut rng);
        let s = sqrtm_psd(&m).unwrap();
        let back = s.as_matrix() * s.as_matrix();
        assert!((back - m.as_matrix()).norm() < 1e-9);
    }

    #[test]
    fn bures_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let s = random_psd(3, &mut rng);
        assert!(bures_distance(&s, &s).unwrap() < 1e-8);

        let a = PsdMatrix::from_diagonal(&[4.0]).unwrap();
        let b = PsdMatrix::from_diagonal(&[1.0]).unwrap();
        assert!((bures_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);

        // commuting diagonal case
        let l: [f64; 3] = [2.0, 3.0, 0.5];
        let m: [f64; 3] = [1.0, 4.0, 2.0];
        let expected: f64 = l
            .iter()
            .zip(m.iter())
            .map(|(&x, &y)| (x.sqrt() - y.sqrt()).powi(2))
            .sum::<f64>()
            .sqrt();
        let got = bures_distance(
            &PsdMatrix::from_diagonal(&l).unwrap(),
            &PsdMatrix::from_diagonal(&m).unwrap(),
        )
        .unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn gelbrich_examples() {
        let s = PsdMatrix::identity(2);
        let mu0 = DVector::zeros(2);
        assert!(gelbrich_w2(&mu0, &s, &mu0, &s).unwrap() < 1e-12);

        let mu1 = DVector::from_vec(vec![1.0, 0.0]);
        assert!((gelbrich_w2(&mu1, &s, &mu0, &s).unwrap() - 1.0).abs() < 1e-12);

        let a = PsdMatrix::from_diagonal(&[4.0]).unwrap();
        let b = PsdMatrix::from_diagonal(&[1.0]).unwrap();
        let z = DVector::zeros(1);
        assert!((gelbrich_w2(&z, &a, &z, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riccati_scalar_arithmetic() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let c = DMatrix::from_element(1, 1, 1.0);
        let one = PsdMatrix::identity(1);
        let out = riccati_step(&one, &a, &c, &one, &one).unwrap();
        assert!((out.as_matrix()[(0, 0)] - 1.125).abs() < 1e-12);
    }

    #[test]
    fn riccati_memoryless_returns_process_noise() {
        let a = DMatrix::zeros(2, 2);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let sw = random_psd(2, &mut rng);
        let prior = PsdMatrix::identity(2);
        let sv = PsdMatrix::identity(1);
        let out = riccati_step(&prior, &a, &c, &sw, &sv).unwrap();
        assert!((out.as_matrix() - sw.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn dare_scalar_fixed_point_matches_quadratic_formula() {
        // fixed point of s = 0.25 s/(1+s) + 1, i.e. s^2 - 0.25 s - 1 = 0
        let expected = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let a = DMatrix::from_element(1, 1, 0.5);
        let c = DMatrix::from_element(1, 1, 1.0);
        let one = PsdMatrix::identity(1);
        let s = dare_fixed_point(&a, &c, &one, &one, 1e-12, 10_000).unwrap();
        assert!((s.as_matrix()[(0, 0)] - expected).abs() < 1e-8);
    }

    #[test]
    fn dare_memoryless_converges_immediately() {
        let a = DMatrix::zeros(2, 2);
        let c = DMatrix::identity(2, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let sw = random_psd(2, &mut rng);
        let sv = PsdMatrix::identity(2);
        let s = dare_fixed_point(&a, &c, &sw, &sv, 1e-10, 10).unwrap();
        assert!((s.as_matrix() - sw.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn ctrb_obsv_examples() {
        let i2 = PsdMatrix::identity(2);

        let a = DMatrix::identity(2, 2);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(check_ctrb_obsv(&a, &c, &i2).unwrap(), (true, false));

        let a0 = DMatrix::zeros(2, 2);
        let c2 = DMatrix::identity(2, 2);
        assert_eq!(check_ctrb_obsv(&a0, &c2, &i2).unwrap(), (true, true));

        // 2D convergence benchmark system
        let ab = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 1.2]);
        let cb = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(check_ctrb_obsv(&ab, &cb, &i2).unwrap(), (true, true));
    }
}
