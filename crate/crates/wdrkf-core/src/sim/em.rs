//! Expectation-maximization estimation of the noise covariances of a linear
//! Gaussian state-space model with known system matrices.
//!
//! The E-step is a Kalman filter plus RTS smoother with lag-one smoothed
//! cross-covariances; the M-step averages the smoothed residual second
//! moments. Both covariance estimates are symmetrized and floored to stay
//! positive definite, which matters on the very short calibration records
//! this is used for.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matops::{sym_eig, PsdMatrix, SymMatrix};

/// Floor value keeping estimates safely positive definite.
fn pd_floor(m: &DMatrix<f64>) -> f64 {
    1e-8 * (1.0 + m.norm())
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub sigma_w: PsdMatrix,
    pub sigma_v: PsdMatrix,
    /// Observed-data log-likelihood at the start of each iteration
    /// (nondecreasing).
    pub log_likelihood: Vec<f64>,
    /// Set when an M-step estimate collapsed and had to be floored.
    pub floored: bool,
}

/// Estimates `(sigma_w, sigma_v)` from an input/output record under known
/// `(A, B, C)` and zero noise means. `inputs` must be one element shorter
/// than `measurements`.
pub fn em_estimate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    measurements: &[DVector<f64>],
    iters: usize,
) -> Result<EmResult> {
    let t_len = measurements.len();
    if t_len < 3 {
        return Err(Error::Invalid(
            "EM needs a trajectory of at least 3 measurements".into(),
        ));
    }
    if inputs.len() + 1 != t_len {
        return Err(Error::Dimension(
            "inputs must be one element shorter than measurements".into(),
        ));
    }
    let nx = a.nrows();
    let ny = c.nrows();
    if a.ncols() != nx || b.nrows() != nx || c.ncols() != nx {
        return Err(Error::Dimension("system matrix dimensions mismatch".into()));
    }
    if measurements.iter().any(|y| y.len() != ny)
        || inputs.iter().any(|u| u.len() != b.ncols())
    {
        return Err(Error::Dimension("trajectory dimensions mismatch".into()));
    }

    // initialize at identity scaled by the empirical output variance
    let ybar = measurements.iter().sum::<DVector<f64>>() / t_len as f64;
    let mut scale = measurements
        .iter()
        .map(|y| (y - &ybar).norm_squared())
        .sum::<f64>()
        / (t_len * ny) as f64;
    scale = scale.max(1e-8);
    let mut sw = DMatrix::identity(nx, nx) * scale;
    let mut sv = DMatrix::identity(ny, ny) * scale;
    let prior_mean = DVector::zeros(nx);
    let prior_cov = DMatrix::identity(nx, nx) * scale;

    let mut log_likelihood = Vec::with_capacity(iters);
    let mut floored = false;

    for _ in 0..iters {
        // E-step: forward filter
        let mut xp = Vec::with_capacity(t_len);
        let mut pp = Vec::with_capacity(t_len);
        let mut xf = Vec::with_capacity(t_len);
        let mut pf = Vec::with_capacity(t_len);
        let mut last_gain = DMatrix::zeros(nx, ny);
        let mut ll = 0.0;
        for t in 0..t_len {
            let (mp, cp) = if t == 0 {
                (prior_mean.clone(), prior_cov.clone())
            } else {
                let mp = a * &xf[t - 1] + b * &inputs[t - 1];
                let cp: DMatrix<f64> = a * &pf[t - 1] * a.transpose() + &sw;
                (mp, (&cp + cp.transpose()) * 0.5)
            };
            let m = c * &cp;
            let s = &m * c.transpose() + &sv;
            let chol = Cholesky::new((&s + s.transpose()) * 0.5)
                .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
            let innovation = &measurements[t] - c * &mp;
            let solved = chol.solve(&innovation);
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            ll += -0.5
                * (ny as f64 * (2.0 * std::f64::consts::PI).ln()
                    + log_det
                    + innovation.dot(&solved));
            let gain = chol.solve(&m).transpose();
            let mf = &mp + &gain * innovation;
            let cf = (DMatrix::identity(nx, nx) - &gain * c) * &cp;
            last_gain = gain;
            xp.push(mp);
            pp.push(cp);
            xf.push(mf);
            pf.push((&cf + cf.transpose()) * 0.5);
        }
        log_likelihood.push(ll);

        // E-step: RTS smoother with lag-one cross-covariances
        let mut xs = xf.clone();
        let mut ps = pf.clone();
        let mut js: Vec<DMatrix<f64>> = vec![DMatrix::zeros(nx, nx); t_len];
        for t in (0..t_len - 1).rev() {
            let pp_inv = Cholesky::new(pp[t + 1].clone())
                .ok_or_else(|| Error::Numerical("predicted covariance is singular".into()))?
                .inverse();
            let j = &pf[t] * a.transpose() * pp_inv;
            xs[t] = &xf[t] + &j * (&xs[t + 1] - &xp[t + 1]);
            let pd = &pf[t] + &j * (&ps[t + 1] - &pp[t + 1]) * j.transpose();
            ps[t] = (&pd + pd.transpose()) * 0.5;
            js[t] = j;
        }
        let mut plag: Vec<DMatrix<f64>> = vec![DMatrix::zeros(nx, nx); t_len];
        plag[t_len - 1] =
            (DMatrix::identity(nx, nx) - &last_gain * c) * a * &pf[t_len - 2];
        for t in (1..t_len - 1).rev() {
            plag[t] = &pf[t] * js[t - 1].transpose()
                + &js[t] * (&plag[t + 1] - a * &pf[t]) * js[t - 1].transpose();
        }

        // M-step
        let mut sw_new = DMatrix::zeros(nx, nx);
        for t in 1..t_len {
            let exx = &ps[t] + &xs[t] * xs[t].transpose();
            let exx_prev = &ps[t - 1] + &xs[t - 1] * xs[t - 1].transpose();
            let exlag = &plag[t] + &xs[t] * xs[t - 1].transpose();
            let d = b * &inputs[t - 1];
            let resid_mean = &xs[t] - a * &xs[t - 1];
            sw_new += exx - &exlag * a.transpose() - a * exlag.transpose()
                + a * exx_prev * a.transpose()
                - &d * resid_mean.transpose()
                - &resid_mean * d.transpose()
                + &d * d.transpose();
        }
        sw_new /= (t_len - 1) as f64;

        let mut sv_new = DMatrix::zeros(ny, ny);
        for t in 0..t_len {
            let resid = &measurements[t] - c * &xs[t];
            sv_new += &resid * resid.transpose() + c * &ps[t] * c.transpose();
        }
        sv_new /= t_len as f64;

        let (sw_floored, fw) = floor_pd(&sw_new)?;
        let (sv_floored, fv) = floor_pd(&sv_new)?;
        floored |= fw || fv;
        sw = sw_floored;
        sv = sv_floored;
    }

    Ok(EmResult {
        sigma_w: PsdMatrix::from_matrix(sw)?,
        sigma_v: PsdMatrix::from_matrix(sv)?,
        log_likelihood,
        floored,
    })
}

fn floor_pd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let sym = SymMatrix::new(m.clone())?;
    let (vals, vecs) = sym_eig(&sym)?;
    let floor = pd_floor(sym.as_matrix());
    if vals[vals.len() - 1] >= floor {
        return Ok((sym.into_matrix(), false));
    }
    let clamped = vals.map(|v| v.max(floor));
    let rebuilt = &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
    Ok(((&rebuilt + rebuilt.transpose()) * 0.5, true))
}
