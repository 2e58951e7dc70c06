//! `wdrkf certify`: computes the convergence certificate for a model and
//! emits it as JSON.

use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use wdrkf_core::convergence::theta_max;

use crate::commands::{from_core, math, usage, CmdResult};
use crate::config::load_study;

#[derive(Serialize)]
struct AssumptionsJson {
    controllable: bool,
    observable: bool,
}

#[derive(Serialize)]
struct CertificateJson {
    n_blocks: usize,
    q: usize,
    /// `null` when the Hankel block vanishes and the bound is infinite.
    phi_tilde: Option<f64>,
    phi: f64,
    theta_max: f64,
    sigma_bar_q_trace: f64,
    assumptions_checked: AssumptionsJson,
}

pub fn run(config: &Path, _seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let cfg = load_study(config).map_err(usage)?;
    if cfg.random_systems.is_some() {
        return Err(usage(anyhow!("certify requires an explicit model")));
    }
    let model_cfg = cfg
        .model
        .as_ref()
        .ok_or_else(|| usage(anyhow!("certify requires a model section")))?;
    let model = model_cfg.to_model().map_err(usage)?;
    if cfg.theta_v != 0.0 {
        return Err(math(anyhow!(
            "certification requires theta_v = 0: the convergence certificate is only \
             valid without measurement-noise ambiguity (got theta_v = {})",
            cfg.theta_v
        )));
    }
    let n_blocks = cfg.n_blocks.unwrap_or(model.nx().max(2));
    let cert = theta_max(&model, cfg.q, n_blocks).map_err(from_core)?;

    let json = CertificateJson {
        n_blocks: cert.n_blocks,
        q: cert.q,
        phi_tilde: cert.phi_tilde.is_finite().then_some(cert.phi_tilde),
        phi: cert.phi,
        theta_max: cert.theta_max,
        sigma_bar_q_trace: cert.sigma_bar_q.trace(),
        assumptions_checked: AssumptionsJson {
            controllable: true,
            observable: true,
        },
    };
    let mut text = serde_json::to_string_pretty(&json).map_err(|e| math(anyhow!(e)))?;
    text.push('\n');
    crate::csvout::emit(out, &text).map_err(usage)?;
    Ok(())
}
