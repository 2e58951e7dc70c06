//! Contraction machinery for the robust Riccati recursion.
//!
//! The pseudo-nominal prior covariance of the robust filter evolves by a
//! Riccati-like map. Blocking the model over `N` steps turns that map into a
//! downsampled Riccati map whose Gramians stay positive definite as long as
//! the per-step perturbation matrices stay below a threshold `phi`; below
//! that threshold the map is a contraction and the filter converges to a
//! steady state. This module builds the downsampled model, computes the
//! eigenvalue bound `phi_tilde`, searches for an admissible `phi`, and turns
//! it into a certified ambiguity radius `theta_max`.

use nalgebra::DMatrix;

use crate::drmmse::{solve_drmmse_report, GelbrichBall, LeastFavorable, SolveOptions};
use crate::error::{Error, Result};
use crate::filters::NominalModel;
use crate::matops::{
    check_ctrb_obsv, max_eig_raw, min_eig_raw, pd_inverse, psd_tolerance, riccati_step_raw,
    sqrtm_raw, sym_eig, PsdMatrix, SymMatrix,
};

/// One step of the robust Riccati map: solve the worst-case program at the
/// given pseudo-nominal prior covariance, then
/// `A ((Sx*)^{-1} + C^T (Sv*)^{-1} C)^{-1} A^T + Sw`.
pub fn dr_riccati_step(
    sigma_prior_hat: &PsdMatrix,
    model: &NominalModel,
    theta_x: f64,
    theta_v: f64,
    opts: &SolveOptions,
) -> Result<(PsdMatrix, LeastFavorable)> {
    dr_riccati_step_warm(sigma_prior_hat, model, theta_x, theta_v, opts, None)
}

/// [`dr_riccati_step`] with a warm start for the inner solver.
///
/// Callers may request a tighter gap than the solver default; when the line
/// search floors out above such a request, the step still accepts iterates
/// that satisfy the default-level gap certificate.
pub fn dr_riccati_step_warm(
    sigma_prior_hat: &PsdMatrix,
    model: &NominalModel,
    theta_x: f64,
    theta_v: f64,
    opts: &SolveOptions,
    warm: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Result<(PsdMatrix, LeastFavorable)> {
    let ball_x = GelbrichBall::new(sigma_prior_hat.clone(), theta_x)?;
    let ball_v = GelbrichBall::new(model.sigma_v().clone(), theta_v)?;
    let lf = match solve_drmmse_report(&ball_x, &ball_v, model.c(), opts, warm) {
        Ok(report) => report.lf,
        Err(Error::SolverStalled { gap, last, .. })
            if opts.tol < SolveOptions::default().tol
                && gap <= SolveOptions::default().tol * (1.0 + last.objective.abs()) =>
        {
            *last
        }
        Err(e) => return Err(e),
    };
    let c = model.c();
    let info =
        pd_inverse(lf.sigma_x_prior.as_matrix())? + c.transpose() * pd_inverse(lf.sigma_v.as_matrix())? * c;
    let next = model.a() * pd_inverse(&info)? * model.a().transpose() + model.sigma_w().as_matrix();
    Ok((PsdMatrix::from_matrix(next)?, lf))
}

/// Perturbation matrix of one robust step relative to the nominal Riccati
/// update:
/// `(S_next)^{-1} - (Sx*_next)^{-1} + C^T (Sv_hat^{-1} - (Sv*_now)^{-1}) C`.
pub fn phi_t(
    sigma_hat_next: &PsdMatrix,
    lf_next: &LeastFavorable,
    lf_now: &LeastFavorable,
    sigma_v_hat: &PsdMatrix,
    c: &DMatrix<f64>,
) -> Result<SymMatrix> {
    let phi = pd_inverse(sigma_hat_next.as_matrix())?
        - pd_inverse(lf_next.sigma_x_prior.as_matrix())?
        + c.transpose()
            * (pd_inverse(sigma_v_hat.as_matrix())? - pd_inverse(lf_now.sigma_v.as_matrix())?)
            * c;
    SymMatrix::new(phi)
}

/// `N`-step blocked system matrices.
#[derive(Debug, Clone)]
pub struct DownsampledModel {
    n_blocks: usize,
    nx: usize,
    ny: usize,
    /// `[G, AG, ..., A^{N-1}G]` with `G = Sw^{1/2}` (block controllability).
    r_n: DMatrix<f64>,
    /// `[CA^{N-1}; ...; CA; C]` (block observability).
    o_n: DMatrix<f64>,
    /// `[A^{N-1}; ...; A; I]`.
    o_n_r: DMatrix<f64>,
    /// `I_N (x) Sv^{1/2}` (block diagonal).
    d_n: DMatrix<f64>,
    /// Strictly block upper triangular with `[L]_{ij} = A^{j-i-1} G`.
    l_n: DMatrix<f64>,
    /// `(I_N (x) C) L_N`.
    h_n: DMatrix<f64>,
    a_pow_n: DMatrix<f64>,
}

impl DownsampledModel {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn r_n(&self) -> &DMatrix<f64> {
        &self.r_n
    }
    pub fn o_n(&self) -> &DMatrix<f64> {
        &self.o_n
    }
    pub fn o_n_r(&self) -> &DMatrix<f64> {
        &self.o_n_r
    }
    pub fn d_n(&self) -> &DMatrix<f64> {
        &self.d_n
    }
    pub fn l_n(&self) -> &DMatrix<f64> {
        &self.l_n
    }
    pub fn h_n(&self) -> &DMatrix<f64> {
        &self.h_n
    }
}

/// Assembles the `N`-step blocked matrices for the model.
pub fn build_downsampled(model: &NominalModel, n_blocks: usize) -> Result<DownsampledModel> {
    if n_blocks == 0 {
        return Err(Error::Invalid("block length must be at least 1".into()));
    }
    let n = n_blocks;
    let nx = model.nx();
    let ny = model.ny();
    let a = model.a();
    let c = model.c();
    let g = sqrtm_raw(model.sigma_w().as_matrix())?;
    let sv_root = sqrtm_raw(model.sigma_v().as_matrix())?;

    // powers A^0 .. A^N
    let mut apow = Vec::with_capacity(n + 1);
    apow.push(DMatrix::identity(nx, nx));
    for k in 0..n {
        let next = &apow[k] * a;
        apow.push(next);
    }

    let mut r_n = DMatrix::zeros(nx, n * nx);
    let mut o_n = DMatrix::zeros(n * ny, nx);
    let mut o_n_r = DMatrix::zeros(n * nx, nx);
    for k in 0..n {
        r_n.view_mut((0, k * nx), (nx, nx)).copy_from(&(&apow[k] * &g));
        o_n.view_mut((k * ny, 0), (ny, nx))
            .copy_from(&(c * &apow[n - 1 - k]));
        o_n_r
            .view_mut((k * nx, 0), (nx, nx))
            .copy_from(&apow[n - 1 - k]);
    }

    let d_n = DMatrix::identity(n, n).kronecker(&sv_root);

    let mut l_n = DMatrix::zeros(n * nx, n * nx);
    for bi in 0..n {
        for bj in (bi + 1)..n {
            l_n.view_mut((bi * nx, bj * nx), (nx, nx))
                .copy_from(&(&apow[bj - bi - 1] * &g));
        }
    }
    let h_n = DMatrix::identity(n, n).kronecker(c) * &l_n;

    Ok(DownsampledModel {
        n_blocks: n,
        nx,
        ny,
        r_n,
        o_n,
        o_n_r,
        d_n,
        l_n,
        h_n,
        a_pow_n: apow[n].clone(),
    })
}

/// Eigenvalue bound on admissible perturbations:
/// `1 / lambda_max(L (I + H^T (DD^T)^{-1} H)^{-1} L^T)`, infinite when the
/// Hankel block vanishes (`N = 1`).
pub fn phi_tilde(dm: &DownsampledModel) -> Result<f64> {
    if dm.l_n.norm() == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ddt = &dm.d_n * dm.d_n.transpose();
    let inner = DMatrix::identity(dm.l_n.ncols(), dm.l_n.ncols())
        + dm.h_n.transpose() * pd_inverse(&ddt)? * &dm.h_n;
    let t = &dm.l_n * pd_inverse(&inner)? * dm.l_n.transpose();
    let lam_max = max_eig_raw(&t)?;
    if lam_max <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / lam_max)
}

/// Gramians and transition matrix of the downsampled Riccati map
/// `S -> alpha (S^{-1} + omega)^{-1} alpha^T + w`.
#[derive(Debug, Clone)]
pub struct OmegaW {
    pub omega: SymMatrix,
    pub w: SymMatrix,
    pub alpha: DMatrix<f64>,
}

/// Evaluates the downsampled-map Gramians at a blocked perturbation matrix.
///
/// `phi_bar` must either be strictly positive definite with
/// `lambda_max < phi_tilde`, or the zero matrix with `handle_zero` set, in
/// which case the analytic limits are used.
pub fn omega_and_w(dm: &DownsampledModel, phi_bar: &SymMatrix, handle_zero: bool) -> Result<OmegaW> {
    let nnx = dm.n_blocks * dm.nx;
    let nny = dm.n_blocks * dm.ny;
    if phi_bar.dim() != nnx {
        return Err(Error::Dimension(format!(
            "blocked perturbation must be {}x{}",
            nnx, nnx
        )));
    }

    let ddt = &dm.d_n * dm.d_n.transpose();
    let ddt_inv = pd_inverse(&ddt)?;
    let hth = DMatrix::identity(nnx, nnx) + dm.h_n.transpose() * &ddt_inv * &dm.h_n;
    let q_tilde = pd_inverse(&hth)?;
    let dh = &ddt + &dm.h_n * dm.h_n.transpose();
    let dh_inv = pd_inverse(&dh)?;
    let omega_n = dm.o_n.transpose() * &dh_inv * &dm.o_n;

    if phi_bar.fro_norm() == 0.0 {
        if !handle_zero {
            return Err(Error::Invalid(
                "zero perturbation requires the handle_zero flag".into(),
            ));
        }
        let w = &dm.r_n * &q_tilde * dm.r_n.transpose();
        let alpha = &dm.a_pow_n - &dm.r_n * dm.h_n.transpose() * &dh_inv * &dm.o_n;
        return Ok(OmegaW {
            omega: SymMatrix::new(omega_n)?,
            w: SymMatrix::new(w)?,
            alpha,
        });
    }

    let (evs, _) = sym_eig(phi_bar)?;
    let (lam_max, lam_min) = (evs[0], evs[evs.len() - 1]);
    if lam_min <= 0.0 {
        return Err(Error::Invalid(
            "singular nonzero perturbation matrices are unsupported; use handle_zero for zero"
                .into(),
        ));
    }
    let pt = phi_tilde(dm)?;
    if pt.is_finite() && lam_max >= pt {
        return Err(Error::InfeasiblePhi(format!(
            "lambda_max {lam_max:.6e} is not below the bound {pt:.6e}"
        )));
    }

    let phi = phi_bar.as_matrix();
    let phi_inv = pd_inverse(phi)?;
    let q_arg = &hth - dm.l_n.transpose() * phi * &dm.l_n;
    let q = pd_inverse(&q_arg)
        .map_err(|_| Error::Numerical("inner Gramian lost positive definiteness".into()))?;
    let w = &dm.r_n * &q * dm.r_n.transpose();

    // S is negative definite below the bound; invert through -S
    let s = &dm.l_n * &q_tilde * dm.l_n.transpose() - &phi_inv;
    let neg_s_inv = pd_inverse(&(-&s))
        .map_err(|_| Error::Numerical("correlation Schur complement is singular".into()))?;
    let s_inv = -neg_s_inv;
    let j = &dm.o_n_r - &dm.l_n * dm.h_n.transpose() * &dh_inv * &dm.o_n;
    let omega = &omega_n + j.transpose() * &s_inv * &j;

    // transition matrix through the stacked correlation kernel
    let kdim = nny + nnx;
    let mut kmat = DMatrix::zeros(kdim, kdim);
    kmat.view_mut((0, 0), (nny, nny)).copy_from(&dh);
    kmat.view_mut((0, nny), (nny, nnx))
        .copy_from(&(&dm.h_n * dm.l_n.transpose()));
    kmat.view_mut((nny, 0), (nnx, nny))
        .copy_from(&(&dm.l_n * dm.h_n.transpose()));
    kmat.view_mut((nny, nny), (nnx, nnx))
        .copy_from(&(&dm.l_n * dm.l_n.transpose() - &phi_inv));
    let kinv = kmat
        .try_inverse()
        .ok_or_else(|| Error::Numerical("correlation kernel is singular".into()))?;

    let mut gstack = DMatrix::zeros(kdim, nnx);
    gstack.view_mut((0, 0), (nny, nnx)).copy_from(&dm.h_n);
    gstack.view_mut((nny, 0), (nnx, nnx)).copy_from(&dm.l_n);
    let mut ob = DMatrix::zeros(kdim, dm.nx);
    ob.view_mut((0, 0), (nny, dm.nx)).copy_from(&dm.o_n);
    ob.view_mut((nny, 0), (nnx, dm.nx)).copy_from(&dm.o_n_r);
    let alpha = &dm.a_pow_n - &dm.r_n * (gstack.transpose() * kinv * ob);

    Ok(OmegaW {
        omega: SymMatrix::new(omega)?,
        w: SymMatrix::new(w)?,
        alpha,
    })
}

/// Searches for the largest admissible contraction threshold: starting from
/// `0.999 * min(phi_tilde, 1/lambda_max(sigma_bar_q))`, shrinks by a factor
/// 0.9 until the observability Gramian at `phi I` is strictly positive
/// definite and `phi * lambda_max(sigma_bar_q) < 1`.
pub fn find_phi(dm: &DownsampledModel, sigma_bar_q: &PsdMatrix) -> Result<f64> {
    let lam_max = max_eig_raw(sigma_bar_q.as_matrix())?;
    if lam_max <= 0.0 {
        return Err(Error::Invalid(
            "reference covariance must have positive eigenvalues".into(),
        ));
    }
    let pt = phi_tilde(dm)?;
    let cap = if pt.is_finite() {
        pt.min(1.0 / lam_max)
    } else {
        1.0 / lam_max
    };
    let nnx = dm.n_blocks * dm.nx;
    let mut phi = 0.999 * cap;
    while phi >= 1e-12 {
        if phi * lam_max < 1.0 {
            let scaled = SymMatrix::new(DMatrix::identity(nnx, nnx) * phi)?;
            if let Ok(ow) = omega_and_w(dm, &scaled, false) {
                let omega_m = ow.omega.as_matrix();
                if min_eig_raw(omega_m)? > psd_tolerance(omega_m) {
                    return Ok(phi);
                }
            }
        }
        phi *= 0.9;
    }
    Err(Error::Certification(
        "contraction threshold search underflowed".into(),
    ))
}

/// Convergence certificate for the robust Riccati recursion.
#[derive(Debug, Clone)]
pub struct ContractionCertificate {
    pub n_blocks: usize,
    pub q: usize,
    /// Eigenvalue bound on blocked perturbations (may be infinite).
    pub phi_tilde: f64,
    /// Accepted contraction threshold, `0 < phi < phi_tilde`.
    pub phi: f64,
    /// Standard Riccati iterate after `q` steps from `sigma_w`.
    pub sigma_bar_q: PsdMatrix,
    /// Certified ambiguity radius for the prior-covariance ball.
    pub theta_max: f64,
}

/// Certifies an ambiguity radius `theta_max` such that for any prior radius
/// below it (and no measurement-noise ambiguity) the robust Riccati
/// recursion converges to a unique fixed point.
pub fn theta_max(model: &NominalModel, q: usize, n_blocks: usize) -> Result<ContractionCertificate> {
    if q == 0 {
        return Err(Error::Invalid("the burn-in index q must be positive".into()));
    }
    if n_blocks < model.nx() {
        return Err(Error::Invalid(format!(
            "block length {} must be at least the state dimension {}",
            n_blocks,
            model.nx()
        )));
    }
    let (ctrb, obsv) = check_ctrb_obsv(model.a(), model.c(), model.sigma_w())?;
    if !ctrb {
        return Err(Error::Assumption(
            "(A, sigma_w^(1/2)) controllability rank test failed".into(),
        ));
    }
    if !obsv {
        return Err(Error::Assumption(
            "(A, C) observability rank test failed".into(),
        ));
    }

    let mut sbar = model.sigma_w().as_matrix().clone();
    for _ in 0..q {
        sbar = riccati_step_raw(
            &sbar,
            model.a(),
            model.c(),
            model.sigma_w().as_matrix(),
            model.sigma_v().as_matrix(),
        )?;
    }
    let sigma_bar_q = PsdMatrix::from_matrix(sbar)?;

    let dm = build_downsampled(model, n_blocks)?;
    let pt = phi_tilde(&dm)?;
    let phi = find_phi(&dm, &sigma_bar_q)?;

    let tr = sigma_bar_q.trace();
    let lam_max = max_eig_raw(sigma_bar_q.as_matrix())?;
    let theta = (tr / (1.0 - phi * lam_max)).sqrt() - tr.sqrt();

    Ok(ContractionCertificate {
        n_blocks,
        q,
        phi_tilde: pt,
        phi,
        sigma_bar_q,
        theta_max: theta.max(0.0),
    })
}

/// Checks the blocked perturbation condition on a run: for every downsampled
/// time `t >= q`, the blocks `phi_{tN-1} ... phi_{tN+N-2}` must satisfy
/// `0 <= phi <= phi_n I` within an eigenvalue slack of `1e-8`.
///
/// `q` counts downsampled (blocked) time; a burn-in of `q_orig` original
/// steps corresponds to `q = q_orig.div_ceil(n_blocks)`.
pub fn certify_run(phis: &[SymMatrix], phi_n: f64, n_blocks: usize, q: usize) -> bool {
    const SLACK: f64 = 1e-8;
    let n = n_blocks.max(1);
    let mut t = q.max(1);
    loop {
        let lo = t * n - 1;
        let hi = t * n + n - 2;
        if hi >= phis.len() {
            return true;
        }
        for p in phis.iter().take(hi + 1).skip(lo) {
            let Ok((evs, _)) = sym_eig(p) else {
                return false;
            };
            if evs[evs.len() - 1] < -SLACK || evs[0] > phi_n + SLACK {
                return false;
            }
        }
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::riccati_step;

    fn benchmark_model() -> NominalModel {
        NominalModel::zero_mean(
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, 1.2]),
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            PsdMatrix::identity(2),
            PsdMatrix::identity(1),
            PsdMatrix::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn downsampled_degenerate_block_length() {
        let dm = build_downsampled(&benchmark_model(), 1).unwrap();
        let g = DMatrix::identity(2, 2); // sigma_w = I
        assert!((dm.r_n() - g).norm() < 1e-12);
        assert!((dm.o_n() - DMatrix::from_row_slice(1, 2, &[1.0, -1.0])).norm() < 1e-12);
        assert!((dm.o_n_r() - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(dm.l_n().norm(), 0.0);
        assert_eq!(dm.h_n().norm(), 0.0);
    }

    #[test]
    fn downsampled_hankel_indexing() {
        let model = benchmark_model();
        let dm = build_downsampled(&model, 3).unwrap();
        let g = DMatrix::identity(2, 2);
        let a = model.a();
        // first block row, third block column: A^1 G
        let block13 = dm.l_n().view((0, 4), (2, 2)).into_owned();
        assert!((block13 - a * &g).norm() < 1e-12);
        let block23 = dm.l_n().view((2, 4), (2, 2)).into_owned();
        assert!((block23 - g).norm() < 1e-12);
        // lower blocks vanish
        assert_eq!(dm.l_n().view((2, 0), (4, 2)).norm(), 0.0);
    }

    #[test]
    fn downsampled_shape_audit() {
        let dm = build_downsampled(&benchmark_model(), 8).unwrap();
        let (nx, ny, n) = (2, 1, 8);
        assert_eq!(dm.r_n().shape(), (nx, n * nx));
        assert_eq!(dm.o_n().shape(), (n * ny, nx));
        assert_eq!(dm.o_n_r().shape(), (n * nx, nx));
        assert_eq!(dm.d_n().shape(), (n * ny, n * ny));
        assert_eq!(dm.l_n().shape(), (n * nx, n * nx));
        assert_eq!(dm.h_n().shape(), (n * ny, n * nx));
    }

    #[test]
    fn phi_tilde_infinite_for_single_block() {
        let dm = build_downsampled(&benchmark_model(), 1).unwrap();
        assert!(phi_tilde(&dm).unwrap().is_infinite());
    }

    #[test]
    fn phi_tilde_benchmark_positive_finite() {
        let dm = build_downsampled(&benchmark_model(), 8).unwrap();
        let pt = phi_tilde(&dm).unwrap();
        assert!(pt.is_finite() && pt > 0.0);
    }

    #[test]
    fn dr_riccati_reduces_to_nominal_at_zero_radius() {
        let model = benchmark_model();
        let prior = PsdMatrix::from_diagonal(&[2.0, 1.5]).unwrap();
        let (next, _) =
            dr_riccati_step(&prior, &model, 0.0, 0.0, &SolveOptions::default()).unwrap();
        let nominal = riccati_step(
            &prior,
            model.a(),
            model.c(),
            model.sigma_w(),
            model.sigma_v(),
        )
        .unwrap();
        assert!((next.as_matrix() - nominal.as_matrix()).norm() < 1e-8);
    }

    #[test]
    fn dr_riccati_scalar_closed_form() {
        // worst case at radius r is (sqrt(s)+r)^2, so the map value is
        // a^2 ((sqrt(s)+r)^{-2} + c^2/sv)^{-1} + sw
        let model = NominalModel::zero_mean(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            PsdMatrix::identity(1),
            PsdMatrix::identity(1),
            PsdMatrix::identity(1),
        )
        .unwrap();
        let prior = PsdMatrix::identity(1);
        let (next, _) = dr_riccati_step(&prior, &model, 0.5, 0.0, &SolveOptions::default()).unwrap();
        let expected = 0.25 / (1.5f64.powi(-2) + 1.0) + 1.0;
        assert!((next.as_matrix()[(0, 0)] - expected).abs() < 1e-7);
    }

    #[test]
    fn phi_scalar_closed_form() {
        // with no measurement ambiguity: phi = 1/s - 1/(sqrt(s)+r)^2
        let model = NominalModel::zero_mean(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            PsdMatrix::identity(1),
            PsdMatrix::identity(1),
            PsdMatrix::identity(1),
        )
        .unwrap();
        let prior = PsdMatrix::identity(1);
        let opts = SolveOptions::default();
        let (next, lf_now) = dr_riccati_step(&prior, &model, 0.5, 0.0, &opts).unwrap();
        let (_, lf_next) = dr_riccati_step(&next, &model, 0.5, 0.0, &opts).unwrap();
        let phi = phi_t(&next, &lf_next, &lf_now, model.sigma_v(), model.c()).unwrap();
        let s = next.as_matrix()[(0, 0)];
        let expected = 1.0 / s - 1.0 / (s.sqrt() + 0.5).powi(2);
        assert!((phi.as_matrix()[(0, 0)] - expected).abs() < 1e-7);
    }

    #[test]
    fn certify_run_trivial_cases() {
        let zeros: Vec<SymMatrix> = (0..40).map(|_| SymMatrix::zeros(2)).collect();
        assert!(certify_run(&zeros, 0.3, 2, 3));

        let mut spiked = zeros.clone();
        spiked[20] = SymMatrix::new(DMatrix::identity(2, 2) * 0.6).unwrap();
        assert!(!certify_run(&spiked, 0.3, 2, 3));
    }

    #[test]
    fn theta_max_rejects_unobservable_model() {
        let model = NominalModel::zero_mean(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            PsdMatrix::identity(2),
            PsdMatrix::identity(1),
            PsdMatrix::identity(2),
        )
        .unwrap();
        let err = theta_max(&model, 20, 2).unwrap_err();
        assert!(err.to_string().contains("observability"));
    }
}
