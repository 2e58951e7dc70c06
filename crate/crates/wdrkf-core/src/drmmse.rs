//! Worst-case MMSE estimation over Bures-Wasserstein ambiguity balls.
//!
//! The per-step robust estimation program maximizes the MMSE value
//! `Tr[Sx - Sx C^T (C Sx C^T + Sv)^{-1} C Sx]` over a prior-covariance ball
//! and a measurement-noise ball. The maximizer pair defines the robust gain.
//!
//! The solver is Frank-Wolfe ascent: the objective is concave (a minimum of
//! linear functions of the pair), its supergradient comes from the inner
//! optimal linear estimator, and the linear maximization oracle over a Bures
//! ball has a closed form, so the duality gap gives a checkable optimality
//! certificate at every iterate.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::matops::{bures_sq_raw, sym_eig, PsdMatrix, SymMatrix};

static SOLVE_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of worst-case solves performed by this process so far.
///
/// Lets callers assert that gain-only online loops perform no optimization.
pub fn solve_call_count() -> u64 {
    SOLVE_CALLS.load(Ordering::Relaxed)
}

/// Ball of covariance matrices within Bures-Wasserstein distance `radius`
/// of `center`.
#[derive(Debug, Clone)]
pub struct GelbrichBall {
    center: PsdMatrix,
    radius: f64,
}

impl GelbrichBall {
    pub fn new(center: PsdMatrix, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::Invalid(
                "ambiguity radius must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &PsdMatrix {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Membership test with additive slack on the distance.
    pub fn contains(&self, sigma: &PsdMatrix, slack: f64) -> Result<bool> {
        let d = bures_sq_raw(sigma.as_matrix(), self.center.as_matrix())?.sqrt();
        Ok(d <= self.radius + slack)
    }
}

/// Maximizing pair of the worst-case MMSE program together with the induced
/// robust gain and posterior covariance.
#[derive(Debug, Clone)]
pub struct LeastFavorable {
    /// Worst-case prior state covariance.
    pub sigma_x_prior: PsdMatrix,
    /// Worst-case measurement noise covariance (positive definite).
    pub sigma_v: PsdMatrix,
    /// Robust gain `Sx C^T (C Sx C^T + Sv)^{-1}`.
    pub gain: DMatrix<f64>,
    /// Posterior covariance `(I - K C) Sx`.
    pub sigma_x_post: PsdMatrix,
    /// Worst-case MMSE value, equal to `Tr[sigma_x_post]`.
    pub objective: f64,
}

/// Frank-Wolfe stopping parameters.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Feasibility slack granted on the ball constraints.
    pub tol_feas: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tol_feas: 1e-6,
            max_iter: 5000,
        }
    }
}

/// Solver outcome with the optimality certificate attached.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub lf: LeastFavorable,
    /// Final duality gap; bounds the suboptimality of `lf.objective`.
    pub gap: f64,
    pub iterations: usize,
    /// Objective value at every iterate (nondecreasing).
    pub objectives: Vec<f64>,
}

/// Worst-case MMSE value `Tr[Sx - Sx C^T (C Sx C^T + Sv)^{-1} C Sx]`.
pub fn mmse_objective(sigma_x: &PsdMatrix, sigma_v: &PsdMatrix, c: &DMatrix<f64>) -> Result<f64> {
    check_dims(sigma_x.dim(), sigma_v.dim(), c)?;
    Ok(eval_objective(sigma_x.as_matrix(), sigma_v.as_matrix(), c)?.0)
}

/// Supergradient of [`mmse_objective`] at `(Sx, Sv)` via the inner optimal
/// estimator `K`: `Gx = (I - KC)^T (I - KC)`, `Gv = K^T K`.
pub fn danskin_gradient(
    sigma_x: &PsdMatrix,
    sigma_v: &PsdMatrix,
    c: &DMatrix<f64>,
) -> Result<(PsdMatrix, PsdMatrix)> {
    check_dims(sigma_x.dim(), sigma_v.dim(), c)?;
    let (_, k) = eval_objective(sigma_x.as_matrix(), sigma_v.as_matrix(), c)?;
    let (gx, gv) = gradients_from_gain(&k, c);
    Ok((PsdMatrix::from_matrix(gx)?, PsdMatrix::from_matrix(gv)?))
}

/// Linear maximization oracle: argmax of `Tr[D S]` over the ball.
///
/// For positive semidefinite `D` the maximizer lies on the candidate curve
/// `S(g) = g^2 (gI - D)^{-1} center (gI - D)^{-1}` with `g > lambda_max(D)`
/// chosen by bisection so the ball constraint is active (within `tol`).
pub fn gelbrich_lmo(d: &PsdMatrix, ball: &GelbrichBall, tol: f64) -> Result<PsdMatrix> {
    if d.dim() != ball.dim() {
        return Err(Error::Dimension(
            "oracle direction and ball dimensions differ".into(),
        ));
    }
    PsdMatrix::from_matrix(lmo_raw(
        d.as_matrix(),
        ball.center().as_matrix(),
        ball.radius(),
        tol,
    )?)
}

/// Solves the worst-case MMSE program over the two balls.
pub fn solve_drmmse(
    ball_x: &GelbrichBall,
    ball_v: &GelbrichBall,
    c: &DMatrix<f64>,
    opts: &SolveOptions,
) -> Result<LeastFavorable> {
    Ok(solve_drmmse_report(ball_x, ball_v, c, opts, None)?.lf)
}

/// Like [`solve_drmmse`] but returns the certificate and accepts a warm
/// start `(Sx, Sv)` from a previous, nearby solve. Infeasible warm starts
/// are pulled back toward the ball centers.
pub fn solve_drmmse_report(
    ball_x: &GelbrichBall,
    ball_v: &GelbrichBall,
    c: &DMatrix<f64>,
    opts: &SolveOptions,
    warm: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Result<SolveReport> {
    SOLVE_CALLS.fetch_add(1, Ordering::Relaxed);
    check_dims(ball_x.dim(), ball_v.dim(), c)?;
    if !ball_v.center().is_pd() {
        return Err(Error::Assumption(
            "nominal measurement noise covariance must be positive definite".into(),
        ));
    }

    let cx = ball_x.center().as_matrix();
    let cv = ball_v.center().as_matrix();
    let mut sx = feasible_start(cx, ball_x.radius(), warm.map(|(x, _)| x))?;
    let mut sv = feasible_start(cv, ball_v.radius(), warm.map(|(_, v)| v))?;

    let lmo_tol = (opts.tol_feas * 1e-3).max(1e-12);
    let mut objectives = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut dead_steps = 0usize;

    for it in 0..opts.max_iter {
        iterations = it;
        let (f, k) = eval_objective(&sx, &sv, c)?;
        objectives.push(f);
        let (gx, gv) = gradients_from_gain(&k, c);

        let vx = lmo_raw(&gx, cx, ball_x.radius(), lmo_tol)?;
        let vv = lmo_raw(&gv, cv, ball_v.radius(), lmo_tol)?;
        let dx = &vx - &sx;
        let dv = &vv - &sv;
        gap = gx.dot(&dx) + gv.dot(&dv);
        if gap <= opts.tol * (1.0 + f.abs()) {
            return Ok(SolveReport {
                lf: build_least_favorable(sx, sv, c)?,
                gap,
                iterations,
                objectives,
            });
        }

        // exact line search on the concave restriction t -> f(S + t D)
        let s0 = c * &sx * c.transpose() + &sv;
        let s1 = c * &dx * c.transpose() + &dv;
        let m0 = c * &sx;
        let m1 = c * &dx;
        let (tr0, tr1) = (sx.trace(), dx.trace());
        let g = |t: f64| -> f64 {
            let s = &s0 + &s1 * t;
            let m = &m0 + &m1 * t;
            match Cholesky::new((&s + s.transpose()) * 0.5) {
                Some(ch) => tr0 + t * tr1 - m.dot(&ch.solve(&m)),
                None => f64::NEG_INFINITY,
            }
        };
        let mut t = golden_max(&g, 0.0, 1.0, 1e-10);
        if g(1.0) >= g(t) {
            t = 1.0;
        }
        if g(t) <= f + 1e-15 * (1.0 + f.abs()) {
            // dead line search: take the open-loop step unless it measurably
            // hurts the objective
            let fallback = 2.0 / (it as f64 + 2.0);
            t = if g(fallback) >= f - 1e-13 * (1.0 + f.abs()) {
                fallback
            } else {
                0.0
            };
        }
        if t == 0.0 {
            dead_steps += 1;
            if dead_steps >= 5 {
                break;
            }
            continue;
        }
        dead_steps = 0;
        sx += &dx * t;
        sv += &dv * t;
        sx = (&sx + sx.transpose()) * 0.5;
        sv = (&sv + sv.transpose()) * 0.5;
    }

    Err(Error::SolverStalled {
        iters: iterations + 1,
        gap,
        last: Box::new(build_least_favorable(sx, sv, c)?),
    })
}

fn check_dims(nx: usize, ny: usize, c: &DMatrix<f64>) -> Result<()> {
    if c.nrows() != ny || c.ncols() != nx {
        return Err(Error::Dimension(format!(
            "measurement matrix is {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            ny,
            nx
        )));
    }
    Ok(())
}

/// Objective value and inner optimal gain at `(Sx, Sv)`.
fn eval_objective(
    sx: &DMatrix<f64>,
    sv: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let m = c * sx;
    let s = &m * c.transpose() + sv;
    let s = (&s + s.transpose()) * 0.5;
    let chol = Cholesky::new(s).ok_or_else(|| {
        Error::Numerical("innovation covariance is singular or indefinite".into())
    })?;
    let sinv_m = chol.solve(&m);
    let obj = sx.trace() - m.dot(&sinv_m);
    Ok((obj, sinv_m.transpose()))
}

fn gradients_from_gain(k: &DMatrix<f64>, c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = c.ncols();
    let ikc = DMatrix::identity(n, n) - k * c;
    let gx = ikc.transpose() * &ikc;
    let gv = k.transpose() * k;
    (
        (&gx + gx.transpose()) * 0.5,
        (&gv + gv.transpose()) * 0.5,
    )
}

fn feasible_start(
    center: &DMatrix<f64>,
    radius: f64,
    warm: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let w = match warm {
        Some(w) if w.nrows() == center.nrows() => w,
        _ => return Ok(center.clone()),
    };
    if radius == 0.0 {
        return Ok(center.clone());
    }
    let b2 = bures_sq_raw(w, center)?;
    let r2 = radius * radius;
    if b2 <= r2 {
        return Ok(w.clone());
    }
    // convexity of the squared distance: scaling toward the center by
    // s <= r^2/b^2 restores feasibility
    let s = 0.999 * r2 / b2;
    Ok(center + (w - center) * s)
}

fn lmo_raw(
    d: &DMatrix<f64>,
    center: &DMatrix<f64>,
    radius: f64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    if radius == 0.0 {
        return Ok(center.clone());
    }
    let (lam, v) = sym_eig(&SymMatrix::new(d.clone())?)?;
    let lam_max = lam[0];
    if lam_max <= 1e-14 * (1.0 + d.norm()) {
        return Ok(center.clone());
    }

    let ct = v.transpose() * center * &v;
    let diag: Vec<f64> = (0..n).map(|i| ct[(i, i)].max(0.0)).collect();
    let target = radius * radius;
    // squared ball distance of the candidate at curve parameter g; strictly
    // decreasing on (lam_max, inf)
    let dist_sq = |g: f64| -> f64 {
        (0..n)
            .map(|i| diag[i] * (lam[i] / (g - lam[i])).powi(2))
            .sum()
    };

    let scale = lam_max.max(1.0);
    let mut lo = f64::NAN;
    let mut delta = 0.1 * scale;
    while delta > 1e-14 * scale {
        if dist_sq(lam_max + delta) >= target {
            lo = lam_max + delta;
            break;
        }
        delta *= 0.1;
    }
    if lo.is_nan() {
        // the center carries no mass along the top eigenspace of d, so the
        // curve cannot activate the constraint; add mass there directly
        return lmo_rank_completion(&lam, &v, center, radius, tol);
    }

    let mut hi = lam_max + scale;
    let mut grow = 0;
    while dist_sq(hi) > target {
        hi = lam_max + (hi - lam_max) * 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical(
                "bisection failed to bracket the ball constraint".into(),
            ));
        }
    }
    if hi < lo {
        hi = lo + scale;
    }
    for _ in 0..200 {
        if dist_sq(lo).sqrt() - dist_sq(hi).sqrt() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dist_sq(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // assemble the candidate on the feasible side of the bracket
    let g = hi;
    let mut st = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            st[(i, j)] = ct[(i, j)] * g * g / ((g - lam[i]) * (g - lam[j]));
        }
    }
    let s = &v * st * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Fallback for degenerate centers: grow mass on the top eigenprojector of
/// the direction until the ball constraint is active.
fn lmo_rank_completion(
    lam: &nalgebra::DVector<f64>,
    v: &DMatrix<f64>,
    center: &DMatrix<f64>,
    radius: f64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let n = lam.len();
    let lam_max = lam[0];
    let top_tol = 1e-10 * lam_max;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if lam[i] >= lam_max - top_tol {
            let col = v.column(i);
            p += col * col.transpose();
        }
    }
    let dist = |t: f64| -> Result<f64> {
        Ok(bures_sq_raw(&(center + &p * t), center)?.sqrt())
    };

    let mut hi = (radius * radius / p.trace()).max(radius);
    let mut grow = 0;
    while dist(hi)? < radius {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical(
                "rank completion failed to reach the ball boundary".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if dist(hi)? - dist(lo)? <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dist(mid)? < radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = center + &p * lo;
    Ok((&s + s.transpose()) * 0.5)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn build_least_favorable(
    sx: DMatrix<f64>,
    sv: DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<LeastFavorable> {
    let (objective, gain) = eval_objective(&sx, &sv, c)?;
    let n = sx.nrows();
    let post = (DMatrix::identity(n, n) - &gain * c) * &sx;
    let sigma_v = PsdMatrix::from_matrix(sv)?;
    if !sigma_v.is_pd() {
        return Err(Error::Numerical(
            "least-favorable measurement covariance lost positive definiteness".into(),
        ));
    }
    Ok(LeastFavorable {
        sigma_x_prior: PsdMatrix::from_matrix(sx)?,
        sigma_v,
        gain,
        sigma_x_post: PsdMatrix::from_matrix(post)?,
        objective,
    })
}
