//! JSON experiment configurations. Unknown keys are rejected so typos fail
//! loudly instead of silently running the wrong study.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wdrkf_core::sim::{ControlledSystem, FilterKind, NoiseSpec, TrackingConfig};
use wdrkf_core::{NominalModel, PsdMatrix};

/// Configuration shared by `certify` and `converge`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default = "default_q")]
    pub q: usize,
    /// Block length of the downsampled analysis; defaults to
    /// `max(n_x, 2)`.
    #[serde(default)]
    pub n_blocks: Option<usize>,
    /// Prior-covariance ambiguity radius; `converge` defaults to the
    /// certified maximum when absent.
    #[serde(default)]
    pub theta_x: Option<f64>,
    #[serde(default)]
    pub theta_v: f64,
    /// Number of time-varying steps in the convergence study.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub random_systems: Option<RandomSystemsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSystemsConfig {
    pub count: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub seed: u64,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "default_random_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub sigma_w: Vec<Vec<f64>>,
    pub sigma_v: Vec<Vec<f64>>,
    #[serde(default)]
    pub w_hat: Option<Vec<f64>>,
    #[serde(default)]
    pub v_hat: Option<Vec<f64>>,
    #[serde(default)]
    pub x0_hat: Option<Vec<f64>>,
    /// Initial prior covariance; defaults to `sigma_w`.
    #[serde(default)]
    pub sigma_x0: Option<Vec<Vec<f64>>>,
}

/// Configuration for the `track` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub q_lqr: Vec<Vec<f64>>,
    pub r_lqr: Vec<Vec<f64>>,
    pub theta_grid: Vec<f64>,
    pub runs: usize,
    pub master_seed: u64,
    #[serde(default = "default_seconds")]
    pub nominal_data_seconds: f64,
    #[serde(default = "default_noise_settings")]
    pub noise_settings: Vec<NoiseName>,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterName>,
    #[serde(default)]
    pub gaussian: GaussianNoiseConfig,
    #[serde(default)]
    pub u_quadratic: UQuadraticConfig,
    /// Optional sampled reference trajectory (`horizon + 1` states).
    #[serde(default)]
    pub reference: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseName {
    Gaussian,
    UQuadratic,
}

impl NoiseName {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::UQuadratic => "u_quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    KfTv,
    KfSs,
    RiskSensitive,
    DrkfSs,
}

impl FilterName {
    pub fn kind(&self) -> FilterKind {
        match self {
            Self::KfTv => FilterKind::KfTv,
            Self::KfSs => FilterKind::KfSs,
            Self::RiskSensitive => FilterKind::RiskSensitive,
            Self::DrkfSs => FilterKind::DrkfSs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianNoiseConfig {
    pub x0_cov: f64,
    pub w_cov: f64,
    pub v_cov: f64,
}

impl Default for GaussianNoiseConfig {
    fn default() -> Self {
        Self {
            x0_cov: 0.01,
            w_cov: 0.01,
            v_cov: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UQuadraticConfig {
    pub lo: f64,
    pub hi: f64,
}

impl Default for UQuadraticConfig {
    fn default() -> Self {
        Self { lo: -0.1, hi: 0.1 }
    }
}

fn default_q() -> usize {
    20
}
fn default_steps() -> usize {
    60
}
fn default_random_blocks() -> usize {
    5
}
fn default_dt() -> f64 {
    0.2
}
fn default_horizon() -> usize {
    50
}
fn default_seconds() -> f64 {
    1.0
}
fn default_noise_settings() -> Vec<NoiseName> {
    vec![NoiseName::Gaussian, NoiseName::UQuadratic]
}
fn default_filters() -> Vec<FilterName> {
    vec![
        FilterName::KfTv,
        FilterName::KfSs,
        FilterName::RiskSensitive,
        FilterName::DrkfSs,
    ]
}

pub fn load_study(path: &Path) -> anyhow::Result<StudyConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn load_track(path: &Path) -> anyhow::Result<TrackConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn matrix(rows: &[Vec<f64>], what: &str) -> anyhow::Result<DMatrix<f64>> {
    if rows.is_empty() {
        bail!("{what} must have at least one row");
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        bail!("{what} must be rectangular and nonempty");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn psd(rows: &[Vec<f64>], what: &str) -> anyhow::Result<PsdMatrix> {
    PsdMatrix::from_matrix(matrix(rows, what)?)
        .with_context(|| format!("{what} must be positive semidefinite"))
}

impl ModelConfig {
    pub fn to_model(&self) -> anyhow::Result<NominalModel> {
        let a = matrix(&self.a, "a")?;
        let c = matrix(&self.c, "c")?;
        let sigma_w = psd(&self.sigma_w, "sigma_w")?;
        let sigma_v = psd(&self.sigma_v, "sigma_v")?;
        let nx = a.nrows();
        let ny = c.nrows();
        let w_hat = match &self.w_hat {
            Some(v) => DVector::from_vec(v.clone()),
            None => DVector::zeros(nx),
        };
        let v_hat = match &self.v_hat {
            Some(v) => DVector::from_vec(v.clone()),
            None => DVector::zeros(ny),
        };
        let x0_hat = match &self.x0_hat {
            Some(v) => DVector::from_vec(v.clone()),
            None => DVector::zeros(nx),
        };
        let sigma_x0 = match &self.sigma_x0 {
            Some(m) => psd(m, "sigma_x0")?,
            None => sigma_w.clone(),
        };
        NominalModel::new(a, c, w_hat, v_hat, sigma_w, sigma_v, x0_hat, sigma_x0)
            .context("model is inconsistent")
    }
}

impl TrackConfig {
    pub fn tracking_config(&self) -> anyhow::Result<TrackingConfig> {
        let q_lqr = psd(&self.q_lqr, "q_lqr")?;
        let r_lqr = psd(&self.r_lqr, "r_lqr")?;
        let reference = self.reference.as_ref().map(|samples| {
            samples
                .iter()
                .map(|s| DVector::from_vec(s.clone()))
                .collect()
        });
        let cfg = TrackingConfig {
            dt: self.dt,
            horizon: self.horizon,
            q_lqr,
            r_lqr,
            theta_grid: self.theta_grid.clone(),
            runs: self.runs,
            master_seed: self.master_seed,
            nominal_data_seconds: self.nominal_data_seconds,
            reference,
        };
        cfg.validate().context("invalid tracking configuration")?;
        Ok(cfg)
    }

    pub fn system(&self, noise: NoiseName) -> anyhow::Result<ControlledSystem> {
        let (process, meas, init) = match noise {
            NoiseName::Gaussian => (
                NoiseSpec::isotropic_gaussian(4, self.gaussian.w_cov)?,
                NoiseSpec::isotropic_gaussian(2, self.gaussian.v_cov)?,
                NoiseSpec::isotropic_gaussian(4, self.gaussian.x0_cov)?,
            ),
            NoiseName::UQuadratic => (
                NoiseSpec::u_quadratic_cube(4, self.u_quadratic.lo, self.u_quadratic.hi)?,
                NoiseSpec::u_quadratic_cube(2, self.u_quadratic.lo, self.u_quadratic.hi)?,
                NoiseSpec::u_quadratic_cube(4, self.u_quadratic.lo, self.u_quadratic.hi)?,
            ),
        };
        Ok(ControlledSystem::tracking_2d(self.dt, process, meas, init)?)
    }
}
