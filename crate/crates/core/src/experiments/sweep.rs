use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::data::{generate_instance_with, Design, Instance};
use crate::amp::{amp_run, AmpConfig};
use crate::error::Result;
use crate::free_energy::{min_eigenvalue, EigenMethod, Objective, VariationalState, MAX_DENSE_DIM};
use crate::ngd::{ngd_run, NgdTrace};
use crate::scalar_channel::{Prior, QuadratureSpec};

/// Outcome of fitting one instance with every requested method.
#[derive(Debug, Clone)]
pub struct Fit {
    pub amp_state: Option<VariationalState>,
    pub tap: Option<NgdTrace>,
    pub mf: Option<NgdTrace>,
}

fn mse(m: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (m - truth).norm_squared() / truth.len() as f64
}

/// AMP warm start (or the null state) followed by NGD on each requested
/// objective.
pub fn fit_instance(inst: &Instance, prior: &Prior, quad: &QuadratureSpec, cfg: &ExperimentConfig) -> Result<Fit> {
    let p = inst.model.p();
    let amp_state = if cfg.amp_warm_start > 0 {
        let amp_cfg = AmpConfig {
            iterations: cfg.amp_warm_start,
            track_gradient: false,
            ..AmpConfig::default()
        };
        Some(amp_run(&inst.model, prior, quad, &amp_cfg, None)?.to_variational(prior)?)
    } else {
        None
    };
    let init = amp_state
        .clone()
        .unwrap_or_else(|| VariationalState::null_state(prior, p));
    let ngd = cfg.ngd_config();
    let tap = if cfg.wants(Method::Tap) {
        Some(ngd_run(&inst.model, prior, init.clone(), &ngd.with_objective(Objective::Tap))?)
    } else {
        None
    };
    let mf = if cfg.wants(Method::Mf) {
        Some(ngd_run(&inst.model, prior, init, &ngd.with_objective(Objective::Mf))?)
    } else {
        None
    };
    Ok(Fit { amp_state, tap, mf })
}

/// One `(δ, replicate)` cell of an MSE sweep. Missing methods are NaN.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MseRow {
    pub delta: f64,
    pub seed: u64,
    pub replicate: usize,
    pub p: usize,
    pub mse_tap: f64,
    pub mse_mf: f64,
    pub mse_amp: f64,
    pub tap_converged: bool,
    pub mf_converged: bool,
    pub tap_iters: usize,
    pub mf_iters: usize,
}

fn mse_row(delta: f64, inst: &Instance, fit: &Fit) -> MseRow {
    let of = |t: &Option<NgdTrace>| {
        t.as_ref()
            .map_or((f64::NAN, false, 0), |t| (mse(t.state.m(), &inst.truth), t.converged, t.steps()))
    };
    let (mse_tap, tap_converged, tap_iters) = of(&fit.tap);
    let (mse_mf, mf_converged, mf_iters) = of(&fit.mf);
    MseRow {
        delta,
        seed: inst.seed,
        replicate: inst.replicate,
        p: inst.model.p(),
        mse_tap,
        mse_mf,
        mse_amp: fit.amp_state.as_ref().map_or(f64::NAN, |s| mse(s.m(), &inst.truth)),
        tap_converged,
        mf_converged,
        tap_iters,
        mf_iters,
    }
}

fn cells(cfg: &ExperimentConfig) -> Vec<(f64, usize, usize)> {
    cfg.dimensions()
        .into_iter()
        .flat_map(|(d, p)| (0..cfg.replicates).map(move |r| (d, p, r)))
        .collect()
}

/// Rows ordered by `(δ, replicate)`; replicates run in parallel.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<Vec<MseRow>> {
    run_mse_sweep_with(cfg, cfg.design)
}

fn run_mse_sweep_with(cfg: &ExperimentConfig, design: Design) -> Result<Vec<MseRow>> {
    cfg.validate()?;
    let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
    let quad = cfg.quadrature()?;
    cells(cfg)
        .into_par_iter()
        .map(|(d, p, r)| {
            let inst = generate_instance_with(cfg, design, p, r)?;
            let fit = fit_instance(&inst, &prior, &quad, cfg)?;
            Ok(mse_row(d, &inst, &fit))
        })
        .collect()
}

/// Mean and sample standard deviation of a column, grouped by `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseSummary {
    pub delta: f64,
    pub count: usize,
    pub mean_tap: f64,
    pub sd_tap: f64,
    pub mean_mf: f64,
    pub sd_mf: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn summarize_mse(rows: &[MseRow]) -> Vec<MseSummary> {
    let mut deltas: Vec<f64> = Vec::new();
    for r in rows {
        if !deltas.contains(&r.delta) {
            deltas.push(r.delta);
        }
    }
    deltas
        .into_iter()
        .map(|d| {
            let sel: Vec<&MseRow> = rows.iter().filter(|r| r.delta == d).collect();
            let tap: Vec<f64> = sel.iter().map(|r| r.mse_tap).collect();
            let mf: Vec<f64> = sel.iter().map(|r| r.mse_mf).collect();
            let (mean_tap, sd_tap) = mean_sd(&tap);
            let (mean_mf, sd_mf) = mean_sd(&mf);
            MseSummary {
                delta: d,
                count: sel.len(),
                mean_tap,
                sd_tap,
                mean_mf,
                sd_mf,
            }
        })
        .collect()
}

/// One `(scenario, δ, replicate)` cell of the universality run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct UniversalityRow {
    pub scenario: Design,
    pub delta: f64,
    pub seed: u64,
    pub replicate: usize,
    pub p: usize,
    pub mse_tap: f64,
    pub mse_mf: f64,
    pub min_eig: f64,
    pub tap_converged: bool,
    pub mf_converged: bool,
}

/// MSE sweep plus the smallest Hessian eigenvalue at the converged TAP state,
/// for every scenario in `cfg.scenarios`.
pub fn run_universality(cfg: &ExperimentConfig) -> Result<Vec<UniversalityRow>> {
    cfg.validate()?;
    let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
    let quad = cfg.quadrature()?;
    let mut cfg = cfg.clone();
    cfg.methods.insert(Method::Tap);
    let jobs: Vec<(Design, f64, usize, usize)> = cfg
        .scenarios
        .iter()
        .flat_map(|&s| cells(&cfg).into_iter().map(move |(d, p, r)| (s, d, p, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(scenario, d, p, r)| {
            let inst = generate_instance_with(&cfg, scenario, p, r)?;
            let fit = fit_instance(&inst, &prior, &quad, &cfg)?;
            let tap = fit.tap.as_ref().expect("TAP requested");
            let method = if 2 * p > MAX_DENSE_DIM {
                EigenMethod::Lanczos
            } else {
                cfg.eigen_method
            };
            let min_eig = min_eigenvalue(&inst.model, &prior, &tap.state, method)?.min_eig;
            let row = mse_row(d, &inst, &fit);
            Ok(UniversalityRow {
                scenario,
                delta: d,
                seed: row.seed,
                replicate: r,
                p,
                mse_tap: row.mse_tap,
                mse_mf: row.mse_mf,
                min_eig,
                tap_converged: row.tap_converged,
                mf_converged: row.mf_converged,
            })
        })
        .collect()
}
