use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::data::generate_instance;
use super::sweep::fit_instance;
use crate::error::{Result, TapError};
use crate::free_energy::VariationalState;
use crate::scalar_channel::{inclusion_probability, Prior};

pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// Mean PIP in the bin; zero when empty.
    pub pip_mean: f64,
    /// Fraction of truly non-zero coefficients; zero when empty.
    pub freq_nonzero: f64,
    pub count: usize,
}

impl CalibrationRow {
    pub fn deviation(&self) -> f64 {
        (self.pip_mean - self.freq_nonzero).abs()
    }
}

/// Reliability table over ten equal PIP bins of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    /// Bins `(pip, β₀ ≠ 0)` pairs; a PIP of exactly 1 falls in the last bin.
    pub fn from_pairs(pairs: &[(f64, bool)]) -> Self {
        let mut sum_pip = [0.0; CALIBRATION_BINS];
        let mut nonzero = [0usize; CALIBRATION_BINS];
        let mut count = [0usize; CALIBRATION_BINS];
        for &(pip, nz) in pairs {
            let b = ((pip * CALIBRATION_BINS as f64).floor().max(0.0) as usize).min(CALIBRATION_BINS - 1);
            sum_pip[b] += pip;
            nonzero[b] += nz as usize;
            count[b] += 1;
        }
        let rows = (0..CALIBRATION_BINS)
            .map(|b| {
                let c = count[b];
                let (pip_mean, freq_nonzero) = if c == 0 {
                    (0.0, 0.0)
                } else {
                    (sum_pip[b] / c as f64, nonzero[b] as f64 / c as f64)
                };
                CalibrationRow {
                    bin_lo: b as f64 / CALIBRATION_BINS as f64,
                    bin_hi: (b + 1) as f64 / CALIBRATION_BINS as f64,
                    pip_mean,
                    freq_nonzero,
                    count: c,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn total_count(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// Largest `|pip_mean − freq_nonzero|` over bins holding at least `min_count` coordinates.
    pub fn max_deviation(&self, min_count: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.count >= min_count && r.count > 0)
            .map(CalibrationRow::deviation)
            .fold(0.0, f64::max)
    }
}

/// `(PIP_j, β₀_j ≠ 0)` from the dual cache of a converged state.
pub fn pip_pairs(prior: &Prior, state: &VariationalState, truth: &[f64]) -> Vec<(f64, bool)> {
    state
        .duals()
        .iter()
        .zip(truth)
        .map(|(d, &b)| (inclusion_probability(prior, *d), b != 0.0))
        .collect()
}

/// Tables for each requested objective, pooling all `(δ, replicate)` cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub tap: Option<CalibrationTable>,
    pub mf: Option<CalibrationTable>,
    pub coordinates: usize,
}

pub fn run_calibration(cfg: &ExperimentConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let spec = cfg.prior_spec()?;
    if !spec.has_zero_atom() {
        return Err(TapError::Config("calibration needs a prior with an atom at zero".into()));
    }
    let prior = spec.to_prior_with_nodes(cfg.prior_nodes)?;
    let quad = cfg.quadrature()?;
    let cells: Vec<(usize, usize)> = cfg
        .dimensions()
        .into_iter()
        .flat_map(|(_, p)| (0..cfg.replicates).map(move |r| (p, r)))
        .collect();
    type Pairs = (Vec<(f64, bool)>, Vec<(f64, bool)>);
    let per_cell: Vec<Pairs> = cells
        .into_par_iter()
        .map(|(p, r)| -> Result<Pairs> {
            let inst = generate_instance(cfg, p, r)?;
            let fit = fit_instance(&inst, &prior, &quad, cfg)?;
            let truth = inst.truth.as_slice();
            let tap = fit.tap.map(|t| pip_pairs(&prior, &t.state, truth)).unwrap_or_default();
            let mf = fit.mf.map(|t| pip_pairs(&prior, &t.state, truth)).unwrap_or_default();
            Ok((tap, mf))
        })
        .collect::<Result<_>>()?;
    let coordinates = cfg.dimensions().iter().map(|(_, p)| p * cfg.replicates).sum();
    let pool = |pick: fn(&Pairs) -> &Vec<(f64, bool)>| {
        let all: Vec<(f64, bool)> = per_cell.iter().flat_map(|c| pick(c).iter().copied()).collect();
        CalibrationTable::from_pairs(&all)
    };
    Ok(CalibrationResult {
        tap: cfg.wants(Method::Tap).then(|| pool(|c| &c.0)),
        mf: cfg.wants(Method::Mf).then(|| pool(|c| &c.1)),
        coordinates,
    })
}
