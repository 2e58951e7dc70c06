//! Filter implementations: robust Kalman filters (time-varying and
//! steady-state), the standard Kalman baselines, and a risk-sensitive
//! baseline.
//!
//! Each filter is exposed both as a stepwise object (`update` on a
//! measurement, then `predict` with an optional known input shift) and as a
//! run-level function over a measurement sequence. The stepwise form is what
//! the simulation engine drives; the run-level functions assume no control
//! input.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::convergence::{dr_riccati_step_warm, phi_t};
use crate::drmmse::{
    solve_drmmse_report, GelbrichBall, LeastFavorable, SolveOptions,
};
use crate::error::{Error, Result};
use crate::matops::{check_ctrb_obsv, dare_fixed_point, pd_inverse, PsdMatrix, SymMatrix};

/// Linear state-space model with stationary nominal noise statistics.
///
/// Dynamics `x_{t+1} = A x_t + w_t`, measurements `y_t = C x_t + v_t`, with
/// nominal noise means `w_hat`, `v_hat`, positive definite nominal noise
/// covariances, and a nominal initial prior `(x0_hat, sigma_x0)`.
#[derive(Debug, Clone)]
pub struct NominalModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    w_hat: DVector<f64>,
    v_hat: DVector<f64>,
    sigma_w: PsdMatrix,
    sigma_v: PsdMatrix,
    x0_hat: DVector<f64>,
    sigma_x0: PsdMatrix,
}

impl NominalModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        w_hat: DVector<f64>,
        v_hat: DVector<f64>,
        sigma_w: PsdMatrix,
        sigma_v: PsdMatrix,
        x0_hat: DVector<f64>,
        sigma_x0: PsdMatrix,
    ) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx || nx == 0 {
            return Err(Error::Dimension("A must be square and nonempty".into()));
        }
        let ny = c.nrows();
        if c.ncols() != nx || ny == 0 {
            return Err(Error::Dimension("C must be n_y x n_x".into()));
        }
        if w_hat.len() != nx || x0_hat.len() != nx || v_hat.len() != ny {
            return Err(Error::Dimension("mean vector dimensions mismatch".into()));
        }
        if sigma_w.dim() != nx || sigma_x0.dim() != nx || sigma_v.dim() != ny {
            return Err(Error::Dimension("covariance dimensions mismatch".into()));
        }
        if !sigma_w.is_pd() || !sigma_v.is_pd() {
            return Err(Error::Assumption(
                "nominal noise covariances must be positive definite".into(),
            ));
        }
        Ok(Self {
            a,
            c,
            w_hat,
            v_hat,
            sigma_w,
            sigma_v,
            x0_hat,
            sigma_x0,
        })
    }

    /// Model with zero noise means and `x0_hat = 0`.
    pub fn zero_mean(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_w: PsdMatrix,
        sigma_v: PsdMatrix,
        sigma_x0: PsdMatrix,
    ) -> Result<Self> {
        let nx = a.nrows();
        let ny = c.nrows();
        Self::new(
            a,
            c,
            DVector::zeros(nx),
            DVector::zeros(ny),
            sigma_w,
            sigma_v,
            DVector::zeros(nx),
            sigma_x0,
        )
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn ny(&self) -> usize {
        self.c.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn w_hat(&self) -> &DVector<f64> {
        &self.w_hat
    }
    pub fn v_hat(&self) -> &DVector<f64> {
        &self.v_hat
    }
    pub fn sigma_w(&self) -> &PsdMatrix {
        &self.sigma_w
    }
    pub fn sigma_v(&self) -> &PsdMatrix {
        &self.sigma_v
    }
    pub fn x0_hat(&self) -> &DVector<f64> {
        &self.x0_hat
    }
    pub fn sigma_x0(&self) -> &PsdMatrix {
        &self.sigma_x0
    }

    pub fn initial_belief(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.x0_hat.clone(),
            cov: self.sigma_x0.clone(),
        }
    }
}

/// Gaussian state belief (prior or posterior).
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: PsdMatrix,
}

/// Measurement update with a worst-case pair: mean moves by the robust gain
/// times the innovation, covariance becomes `(I - K C) Sx*`.
pub fn measurement_update(
    prior: &GaussianBelief,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    lf: &LeastFavorable,
    v_hat: &DVector<f64>,
) -> Result<GaussianBelief> {
    let innovation = y - c * &prior.mean - v_hat;
    let mean = &prior.mean + &lf.gain * innovation;
    let n = prior.mean.len();
    let cov = (DMatrix::identity(n, n) - &lf.gain * c) * lf.sigma_x_prior.as_matrix();
    Ok(GaussianBelief {
        mean,
        cov: PsdMatrix::from_matrix(cov)?,
    })
}

/// Prediction through the nominal dynamics: `(A m + w_hat, A S A^T + Sw)`.
pub fn predict(post: &GaussianBelief, model: &NominalModel) -> Result<GaussianBelief> {
    let mean = model.a() * &post.mean + model.w_hat();
    let cov = model.a() * post.cov.as_matrix() * model.a().transpose()
        + model.sigma_w().as_matrix();
    Ok(GaussianBelief {
        mean,
        cov: PsdMatrix::from_matrix(cov)?,
    })
}

/// Stepwise time-varying robust Kalman filter. Solves the worst-case program
/// at every measurement update.
pub struct TvDrkf<'m> {
    model: &'m NominalModel,
    theta_x: f64,
    theta_v: f64,
    opts: SolveOptions,
    prior: GaussianBelief,
    last_post: Option<GaussianBelief>,
    warm: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl<'m> TvDrkf<'m> {
    pub fn new(
        model: &'m NominalModel,
        theta_x: f64,
        theta_v: f64,
        opts: SolveOptions,
    ) -> Result<Self> {
        if theta_x < 0.0 || theta_v < 0.0 {
            return Err(Error::Invalid("ambiguity radii must be nonnegative".into()));
        }
        Ok(Self {
            model,
            theta_x,
            theta_v,
            opts,
            prior: model.initial_belief(),
            last_post: None,
            warm: None,
        })
    }

    pub fn prior(&self) -> &GaussianBelief {
        &self.prior
    }

    /// Solves the worst-case program at the current prior and applies the
    /// measurement update.
    pub fn update(&mut self, y: &DVector<f64>) -> Result<(GaussianBelief, LeastFavorable)> {
        let ball_x = GelbrichBall::new(self.prior.cov.clone(), self.theta_x)?;
        let ball_v = GelbrichBall::new(self.model.sigma_v().clone(), self.theta_v)?;
        let warm = self.warm.as_ref().map(|(x, v)| (x, v));
        let report = solve_drmmse_report(&ball_x, &ball_v, self.model.c(), &self.opts, warm)?;
        let lf = report.lf;
        self.warm = Some((
            lf.sigma_x_prior.as_matrix().clone(),
            lf.sigma_v.as_matrix().clone(),
        ));
        let post = measurement_update(&self.prior, y, self.model.c(), &lf, self.model.v_hat())?;
        self.last_post = Some(post.clone());
        Ok((post, lf))
    }

    /// Propagates the last posterior, adding an optional known input shift to
    /// the predicted mean.
    pub fn predict(&mut self, shift: Option<&DVector<f64>>) -> Result<()> {
        let post = self
            .last_post
            .take()
            .ok_or_else(|| Error::Invalid("predict called before update".into()))?;
        let mut next = predict(&post, self.model)?;
        if let Some(s) = shift {
            next.mean += s;
        }
        self.prior = next;
        Ok(())
    }
}

/// One step of a time-varying robust filter run.
#[derive(Debug, Clone)]
pub struct DrStep {
    pub posterior: GaussianBelief,
    pub lf: LeastFavorable,
    /// Perturbation matrix of the step; needs the next step's solve, so the
    /// final step carries `None`.
    pub phi: Option<SymMatrix>,
}

/// Runs the time-varying robust filter over a measurement sequence.
pub fn tv_drkf_run(
    model: &NominalModel,
    theta_x: f64,
    theta_v: f64,
    measurements: &[DVector<f64>],
    opts: &SolveOptions,
) -> Result<Vec<DrStep>> {
    let mut filter = TvDrkf::new(model, theta_x, theta_v, *opts)?;
    let mut posts = Vec::with_capacity(measurements.len());
    let mut lfs = Vec::with_capacity(measurements.len());
    let mut next_priors = Vec::with_capacity(measurements.len());
    for (t, y) in measurements.iter().enumerate() {
        let (post, lf) = filter.update(y).map_err(|e| match e {
            Error::SolverStalled { iters, gap, last } => Error::Numerical(format!(
                "worst-case solve stalled at step {t} after {iters} iterations (gap {gap:.3e}, objective {:.6e})",
                last.objective
            )),
            other => other,
        })?;
        filter.predict(None)?;
        posts.push(post);
        lfs.push(lf);
        next_priors.push(filter.prior().cov.clone());
    }

    let mut steps = Vec::with_capacity(posts.len());
    for t in 0..posts.len() {
        let phi = if t + 1 < posts.len() {
            Some(phi_t(
                &next_priors[t],
                &lfs[t + 1],
                &lfs[t],
                model.sigma_v(),
                model.c(),
            )?)
        } else {
            None
        };
        steps.push(DrStep {
            posterior: posts[t].clone(),
            lf: lfs[t].clone(),
            phi,
        });
    }
    Ok(steps)
}

/// Steady-state robust filter obtained as a fixed point of the robust
/// Riccati map.
#[derive(Debug, Clone)]
pub struct SsDrkf {
    /// Fixed point of the robust Riccati map (pseudo-nominal prior
    /// covariance).
    pub sigma_prior_ss: PsdMatrix,
    /// Worst-case pair solved at the fixed point.
    pub lf: LeastFavorable,
    /// Constant robust gain.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    /// Fixed-point residual `||r(S) - S||_F` at the returned point.
    pub residual: f64,
    /// Set when `theta_v > 0`: the fixed-point route is only proven optimal
    /// without measurement-noise ambiguity, so treat the result as a
    /// well-monitored heuristic there.
    pub heuristic: bool,
}

/// Inner solver gap tolerance for the steady-state iteration. Tighter than
/// the default so warm-started solves become exactly idempotent at the fixed
/// point; below ~1e-10 the line-search resolution is the binding limit.
const SS_INNER_TOL: f64 = 1e-10;

/// Iterates the robust Riccati map from `sigma_w` until
/// `||r(S) - S||_F <= tol * (1 + ||S||_F)`.
pub fn ss_drkf_solve(
    model: &NominalModel,
    theta_x: f64,
    theta_v: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SsDrkf> {
    if theta_x < 0.0 || theta_v < 0.0 {
        return Err(Error::Invalid("ambiguity radii must be nonnegative".into()));
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

    let opts = SolveOptions {
        tol: SS_INNER_TOL,
        ..SolveOptions::default()
    };
    let mut sigma = model.sigma_w().clone();
    let mut warm: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut residual = f64::INFINITY;
    for k in 0..max_iter {
        let warm_ref = warm.as_ref().map(|(x, v)| (x, v));
        let (next, lf) = dr_riccati_step_warm(&sigma, model, theta_x, theta_v, &opts, warm_ref)?;
        residual = (next.as_matrix() - sigma.as_matrix()).norm();
        if residual <= tol * (1.0 + sigma.fro_norm()) {
            let gain = lf.gain.clone();
            return Ok(SsDrkf {
                sigma_prior_ss: sigma,
                lf,
                gain,
                iterations: k + 1,
                residual,
                heuristic: theta_v > 0.0,
            });
        }
        warm = Some((
            lf.sigma_x_prior.as_matrix().clone(),
            lf.sigma_v.as_matrix().clone(),
        ));
        sigma = next;
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual,
    })
}

/// Constant-gain online filter (used by the steady-state robust filter and
/// the steady-state Kalman baseline). Performs no optimization.
pub struct SteadyGainFilter<'m> {
    model: &'m NominalModel,
    gain: DMatrix<f64>,
    prior_mean: DVector<f64>,
    last_post: Option<DVector<f64>>,
}

impl<'m> SteadyGainFilter<'m> {
    pub fn new(model: &'m NominalModel, gain: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != model.nx() || gain.ncols() != model.ny() {
            return Err(Error::Dimension("gain must be n_x x n_y".into()));
        }
        Ok(Self {
            model,
            gain,
            prior_mean: model.x0_hat().clone(),
            last_post: None,
        })
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn update(&mut self, y: &DVector<f64>) -> DVector<f64> {
        let innovation = y - self.model.c() * &self.prior_mean - self.model.v_hat();
        let post = &self.prior_mean + &self.gain * innovation;
        self.last_post = Some(post.clone());
        post
    }

    pub fn predict(&mut self, shift: Option<&DVector<f64>>) -> Result<()> {
        let post = self
            .last_post
            .take()
            .ok_or_else(|| Error::Invalid("predict called before update".into()))?;
        let mut mean = self.model.a() * post + self.model.w_hat();
        if let Some(s) = shift {
            mean += s;
        }
        self.prior_mean = mean;
        Ok(())
    }
}

/// Constant-gain online loop: update with the fixed gain, then propagate.
/// Performs zero optimization calls.
pub fn ss_drkf_run(
    gain: &DMatrix<f64>,
    model: &NominalModel,
    measurements: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let mut filter = SteadyGainFilter::new(model, gain.clone())?;
    let mut means = Vec::with_capacity(measurements.len());
    for y in measurements {
        means.push(filter.update(y));
        filter.predict(None)?;
    }
    Ok(means)
}

/// Stepwise standard time-varying Kalman filter.
pub struct TvKalman<'m> {
    model: &'m NominalModel,
    prior: GaussianBelief,
    last_post: Option<GaussianBelief>,
}

impl<'m> TvKalman<'m> {
    pub fn new(model: &'m NominalModel) -> Self {
        Self {
            model,
            prior: model.initial_belief(),
            last_post: None,
        }
    }

    pub fn prior(&self) -> &GaussianBelief {
        &self.prior
    }

    pub fn update(&mut self, y: &DVector<f64>) -> Result<GaussianBelief> {
        let c = self.model.c();
        let m = c * self.prior.cov.as_matrix();
        let s = &m * c.transpose() + self.model.sigma_v().as_matrix();
        let chol = Cholesky::new((&s + s.transpose()) * 0.5)
            .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
        let gain = chol.solve(&m).transpose();
        let innovation = y - c * &self.prior.mean - self.model.v_hat();
        let mean = &self.prior.mean + &gain * innovation;
        let n = self.model.nx();
        let cov = (DMatrix::identity(n, n) - &gain * c) * self.prior.cov.as_matrix();
        let post = GaussianBelief {
            mean,
            cov: PsdMatrix::from_matrix(cov)?,
        };
        self.last_post = Some(post.clone());
        Ok(post)
    }

    pub fn predict(&mut self, shift: Option<&DVector<f64>>) -> Result<()> {
        let post = self
            .last_post
            .take()
            .ok_or_else(|| Error::Invalid("predict called before update".into()))?;
        let mut next = predict(&post, self.model)?;
        if let Some(s) = shift {
            next.mean += s;
        }
        self.prior = next;
        Ok(())
    }
}

/// Posterior means and covariances of a filter run.
#[derive(Debug, Clone)]
pub struct KalmanRun {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<PsdMatrix>,
}

/// Standard time-varying Kalman filter over a measurement sequence.
pub fn kalman_run(model: &NominalModel, measurements: &[DVector<f64>]) -> Result<KalmanRun> {
    let mut filter = TvKalman::new(model);
    let mut means = Vec::with_capacity(measurements.len());
    let mut covs = Vec::with_capacity(measurements.len());
    for y in measurements {
        let post = filter.update(y)?;
        filter.predict(None)?;
        means.push(post.mean);
        covs.push(post.cov);
    }
    Ok(KalmanRun { means, covs })
}

/// Steady-state Kalman gain and the associated prior covariance fixed point.
pub fn steady_kalman_gain(model: &NominalModel) -> Result<(DMatrix<f64>, PsdMatrix)> {
    let prior = dare_fixed_point(
        model.a(),
        model.c(),
        model.sigma_w(),
        model.sigma_v(),
        1e-12,
        20_000,
    )?;
    let c = model.c();
    let m = c * prior.as_matrix();
    let s = &m * c.transpose() + model.sigma_v().as_matrix();
    let gain = pd_inverse(&((&s + s.transpose()) * 0.5))? * m;
    Ok((gain.transpose(), prior))
}

/// Steady-state Kalman filter run; the covariance column holds the constant
/// steady posterior covariance.
pub fn steady_kalman_run(model: &NominalModel, measurements: &[DVector<f64>]) -> Result<KalmanRun> {
    let (gain, prior) = steady_kalman_gain(model)?;
    let n = model.nx();
    let post_cov =
        PsdMatrix::from_matrix((DMatrix::identity(n, n) - &gain * model.c()) * prior.as_matrix())?;
    let means = ss_drkf_run(&gain, model, measurements)?;
    let covs = vec![post_cov; means.len()];
    Ok(KalmanRun { means, covs })
}

/// Parameters of the risk-sensitive baseline filter.
#[derive(Debug, Clone)]
pub struct RiskSensitiveParams {
    pub theta: f64,
    pub q_weight: PsdMatrix,
}

impl RiskSensitiveParams {
    pub fn new(theta: f64, q_weight: PsdMatrix) -> Result<Self> {
        if theta < 0.0 || !theta.is_finite() {
            return Err(Error::Invalid(
                "risk sensitivity must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { theta, q_weight })
    }

    /// Identity weighting, the usual default.
    pub fn identity_weight(theta: f64, nx: usize) -> Result<Self> {
        Self::new(theta, PsdMatrix::identity(nx))
    }
}

/// Stepwise risk-sensitive filter. The prior covariance evolves by
/// `A ((S^-)^{-1} + C^T Sv^{-1} C - theta Q^T Q)^{-1} A^T + Sw`; the gain is
/// the standard one at the current prior.
pub struct RiskSensitiveFilter<'m> {
    model: &'m NominalModel,
    qtq: DMatrix<f64>,
    prior: GaussianBelief,
    last_post_mean: Option<DVector<f64>>,
    step: usize,
}

impl<'m> RiskSensitiveFilter<'m> {
    pub fn new(model: &'m NominalModel, params: &RiskSensitiveParams) -> Result<Self> {
        if params.q_weight.dim() != model.nx() {
            return Err(Error::Dimension(
                "risk weighting must match the state dimension".into(),
            ));
        }
        let q = params.q_weight.as_matrix();
        Ok(Self {
            model,
            qtq: q.transpose() * q * params.theta,
            prior: model.initial_belief(),
            last_post_mean: None,
            step: 0,
        })
    }

    pub fn update(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.model.c();
        let m = c * self.prior.cov.as_matrix();
        let s = &m * c.transpose() + self.model.sigma_v().as_matrix();
        let chol = Cholesky::new((&s + s.transpose()) * 0.5)
            .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
        let gain = chol.solve(&m).transpose();
        let innovation = y - c * &self.prior.mean - self.model.v_hat();
        let post = &self.prior.mean + &gain * innovation;
        self.last_post_mean = Some(post.clone());
        Ok(post)
    }

    pub fn predict(&mut self, shift: Option<&DVector<f64>>) -> Result<()> {
        let post = self
            .last_post_mean
            .take()
            .ok_or_else(|| Error::Invalid("predict called before update".into()))?;
        let c = self.model.c();
        let bracket = pd_inverse(self.prior.cov.as_matrix())?
            + c.transpose() * pd_inverse(self.model.sigma_v().as_matrix())? * c
            - &self.qtq;
        let bracket = (&bracket + bracket.transpose()) * 0.5;
        let inv = Cholesky::new(bracket)
            .map(|ch| ch.inverse())
            .ok_or(Error::RiskTooLarge { step: self.step })?;
        let cov = self.model.a() * inv * self.model.a().transpose()
            + self.model.sigma_w().as_matrix();
        let mut mean = self.model.a() * post + self.model.w_hat();
        if let Some(s) = shift {
            mean += s;
        }
        self.prior = GaussianBelief {
            mean,
            cov: PsdMatrix::from_matrix(cov)?,
        };
        self.step += 1;
        Ok(())
    }
}

/// Risk-sensitive filter over a measurement sequence.
pub fn risk_sensitive_run(
    model: &NominalModel,
    params: &RiskSensitiveParams,
    measurements: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let mut filter = RiskSensitiveFilter::new(model, params)?;
    let mut means = Vec::with_capacity(measurements.len());
    for y in measurements {
        means.push(filter.update(y)?);
        filter.predict(None)?;
    }
    Ok(means)
}
