//! `wdrkf track`: the LQR tracking sweep over filters, robustness radii,
//! noise settings, and seeded Monte Carlo runs.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use rayon::prelude::*;
use wdrkf_core::sim::{simulate_tracking, ControlledSystem, RunMetrics};

use crate::commands::{usage, CmdResult};
use crate::config::{load_track, FilterName, NoiseName};
use crate::csvout::{emit, fmt, Csv};

struct Job {
    noise: NoiseName,
    system_index: usize,
    filter: FilterName,
    theta: f64,
    run_index: u64,
}

struct Row {
    noise: NoiseName,
    filter: FilterName,
    theta: f64,
    run_index: u64,
    outcome: Result<RunMetrics, String>,
}

pub fn run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let mut cfg = load_track(config).map_err(usage)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let core_cfg = cfg.tracking_config().map_err(usage)?;
    let systems: Vec<ControlledSystem> = cfg
        .noise_settings
        .iter()
        .map(|n| cfg.system(*n))
        .collect::<anyhow::Result<_>>()
        .map_err(usage)?;

    // canonical job order: noise setting, filter, theta, run index
    let mut jobs = Vec::new();
    for (system_index, noise) in cfg.noise_settings.iter().enumerate() {
        for filter in &cfg.filters {
            let thetas: Vec<f64> = if filter.kind().uses_theta() {
                cfg.theta_grid.clone()
            } else {
                vec![0.0]
            };
            for theta in thetas {
                for run_index in 0..cfg.runs as u64 {
                    jobs.push(Job {
                        noise: *noise,
                        system_index,
                        filter: *filter,
                        theta,
                        run_index,
                    });
                }
            }
        }
    }

    let run_job = |job: &Job| -> Row {
        let outcome = simulate_tracking(
            &systems[job.system_index],
            job.filter.kind(),
            job.theta,
            &core_cfg,
            job.run_index,
        )
        .map_err(|e| e.to_string());
        Row {
            noise: job.noise,
            filter: job.filter,
            theta: job.theta,
            run_index: job.run_index,
            outcome,
        }
    };

    // WDRKF_THREADS: 0 or 1 forces serial execution, n caps the pool,
    // unset uses the default pool; collect preserves job order either way
    let rows: Vec<Row> = match thread_cap() {
        Some(0) | Some(1) => jobs.iter().map(run_job).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(anyhow!(e)))?
            .install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.par_iter().map(run_job).collect(),
    };

    let per_run = per_run_csv(&rows);
    let aggregate = aggregate_csv(&rows, cfg.runs);

    match out {
        Some(path) => {
            emit(Some(path), &per_run).map_err(usage)?;
            let agg_path = aggregate_path(path);
            emit(Some(&agg_path), &aggregate).map_err(usage)?;
        }
        None => {
            print!("{per_run}");
            println!();
            print!("{aggregate}");
        }
    }
    Ok(())
}

fn thread_cap() -> Option<usize> {
    std::env::var("WDRKF_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn aggregate_path(per_run: &Path) -> PathBuf {
    let stem = per_run
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    let ext = per_run
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    per_run.with_file_name(format!("{stem}_aggregate.{ext}"))
}

fn per_run_csv(rows: &[Row]) -> String {
    let mut csv = Csv::new("noise,filter,theta,run_index,lqr_cost,avg_mse,failed");
    for row in rows {
        match &row.outcome {
            Ok(m) => csv.row([
                row.noise.as_str().to_string(),
                row.filter.kind().as_str().to_string(),
                fmt(row.theta),
                row.run_index.to_string(),
                fmt(m.lqr_cost),
                fmt(m.avg_mse),
                "0".to_string(),
            ]),
            Err(_) => csv.row([
                row.noise.as_str().to_string(),
                row.filter.kind().as_str().to_string(),
                fmt(row.theta),
                row.run_index.to_string(),
                String::new(),
                String::new(),
                "1".to_string(),
            ]),
        }
    }
    csv.into_string()
}

fn aggregate_csv(rows: &[Row], runs: usize) -> String {
    let mut csv = Csv::new(
        "noise,filter,theta,runs,failed,mean_lqr_cost,std_lqr_cost,mean_avg_mse,std_avg_mse",
    );
    // rows arrive grouped by (noise, filter, theta) in canonical order
    let mut i = 0;
    while i < rows.len() {
        let group_end = i + runs;
        let group = &rows[i..group_end.min(rows.len())];
        let head = &group[0];
        let costs: Vec<f64> = group
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.lqr_cost))
            .collect();
        let mses: Vec<f64> = group
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|m| m.avg_mse))
            .collect();
        let failed = group.len() - costs.len();
        let (mc, sc) = mean_std(&costs);
        let (mm, sm) = mean_std(&mses);
        let fmt_opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
        csv.row([
            head.noise.as_str().to_string(),
            head.filter.kind().as_str().to_string(),
            fmt(head.theta),
            group.len().to_string(),
            failed.to_string(),
            fmt_opt(mc),
            fmt_opt(sc),
            fmt_opt(mm),
            fmt_opt(sm),
        ]);
        i = group_end;
    }
    csv.into_string()
}

/// Sample mean and standard deviation over the successful runs.
fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}
