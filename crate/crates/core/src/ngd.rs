//! Natural gradient descent on the free energies.
//!
//! The iterate lives in the natural parameters. One step is
//!
//! ```text
//! (λ, −γ/2) ← (λ, −γ/2) − η ∇F(m, s),    (m, s) ← tilted moments at (λ, γ)
//! ```
//!
//! which is mirror descent with the log-partition as the Bregman generator.
//! No dual solve is needed inside the loop.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapError};
use crate::free_energy::{energy, evaluate, LinearModel, Objective, VariationalState};
use crate::scalar_channel::{DualPair, Prior, DUAL_CAP};

/// Projections beyond this count set [`NgdTrace::projection_flag`].
pub const PROJECTION_FLAG_LIMIT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgdConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once `‖∇F‖²/p` drops below this.
    pub grad_tol: f64,
    pub backtracking: bool,
    pub objective: Objective,
    pub max_halvings: usize,
}

impl Default for NgdConfig {
    fn default() -> Self {
        Self {
            eta: 0.2,
            max_iters: 20_000,
            grad_tol: 1e-10,
            backtracking: true,
            objective: Objective::Tap,
            max_halvings: 50,
        }
    }
}

impl NgdConfig {
    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(TapError::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(TapError::Config("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One row per visited iterate; `step` is the step size used to leave it
/// (zero at the final iterate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NgdRecord {
    pub k: usize,
    pub f_value: f64,
    pub grad_norm_sq_per_p: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    /// Backtracking could not find a non-increasing step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct NgdTrace {
    pub records: Vec<NgdRecord>,
    pub state: VariationalState,
    pub converged: bool,
    pub termination: Termination,
    /// Dual clamps applied to keep the iterate inside Γ.
    pub projections: usize,
    pub projection_flag: bool,
}

impl NgdTrace {
    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.f_value)
    }

    pub fn final_grad_norm_sq_per_p(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.grad_norm_sq_per_p)
    }

    /// Steps actually taken.
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// `true` when the recorded values never increase.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].f_value <= w[0].f_value)
    }
}

fn clamp_dual(d: DualPair, projections: &mut usize) -> DualPair {
    let l = d.lambda.clamp(-DUAL_CAP, DUAL_CAP);
    let g = d.gamma.clamp(-DUAL_CAP, DUAL_CAP);
    if l != d.lambda || g != d.gamma {
        *projections += 1;
    }
    DualPair::new(l, g)
}

/// Minimizes `cfg.objective` starting from `init`.
pub fn ngd_run(model: &LinearModel, prior: &Prior, init: VariationalState, cfg: &NgdConfig) -> Result<NgdTrace> {
    cfg.validate()?;
    if model.p() != init.p() {
        return Err(TapError::Shape("model and initial state dimensions differ".into()));
    }
    let mut state = init;
    let mut projections = state.projections();
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;

    for k in 0..=cfg.max_iters {
        let eval = evaluate(model, &state, cfg.objective)?;
        let g2 = eval.grad_norm_sq_per_p();
        records.push(NgdRecord {
            k,
            f_value: eval.value,
            grad_norm_sq_per_p: g2,
            step: 0.0,
        });
        if g2 < cfg.grad_tol {
            termination = Termination::Converged;
            break;
        }
        if k == cfg.max_iters {
            break;
        }

        let mut eta = cfg.eta;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut clamps = 0;
            let duals: Vec<DualPair> = state
                .duals()
                .iter()
                .enumerate()
                .map(|(j, d)| {
                    let next = DualPair::new(
                        d.lambda - eta * eval.grad_m[j],
                        d.gamma + 2.0 * eta * eval.grad_s[j],
                    );
                    clamp_dual(next, &mut clamps)
                })
                .collect();
            let candidate = VariationalState::from_duals(prior, duals)?;
            if !cfg.backtracking {
                accepted = Some((candidate, clamps));
                break;
            }
            let f_new = energy(model, &candidate, cfg.objective)?;
            if f_new <= eval.value {
                accepted = Some((candidate, clamps));
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some((next, clamps)) => {
                projections += clamps;
                records.last_mut().expect("record pushed").step = eta;
                state = next;
            }
            None => {
                termination = Termination::Stalled;
                break;
            }
        }
    }

    Ok(NgdTrace {
        records,
        state,
        converged: termination == Termination::Converged,
        termination,
        projections,
        projection_flag: projections > PROJECTION_FLAG_LIMIT,
    })
}

/// [`ngd_run`] on the naive mean-field energy.
pub fn mf_minimize(model: &LinearModel, prior: &Prior, init: VariationalState, cfg: &NgdConfig) -> Result<NgdTrace> {
    ngd_run(model, prior, init, &cfg.with_objective(Objective::Mf))
}

/// `max_j γ_j − min_j γ_j` over the dual cache.
pub fn gamma_spread(state: &VariationalState) -> f64 {
    let (lo, hi) = state
        .duals()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.gamma), hi.max(d.gamma)));
    hi - lo
}

/// The common stationary value `(n/p)/V` of every `γ_j`.
pub fn stationary_gamma(model: &LinearModel, state: &VariationalState) -> f64 {
    model.delta_hat() / state.v(model.sigma2())
}

/// Coefficient of determination of the least-squares line through
/// `log(f_k − f_final)` over the last `window` records before the final one.
/// Records whose gap is not positive are skipped. Returns `None` with fewer
/// than three usable points.
pub fn log_gap_r2(records: &[NgdRecord], window: usize) -> Option<f64> {
    let (last, body) = records.split_last()?;
    log_gap_r2_against(body, last.f_value, window)
}

/// As [`log_gap_r2`], with the gap taken against `f_ref` over the last
/// `window` records.
pub fn log_gap_r2_against(records: &[NgdRecord], f_ref: f64, window: usize) -> Option<f64> {
    let start = records.len().saturating_sub(window);
    let pts: Vec<(f64, f64)> = records[start..]
        .iter()
        .filter_map(|r| {
            let gap = r.f_value - f_ref;
            (gap > 0.0).then(|| (r.k as f64, gap.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return Some(1.0);
    }
    Some(sxy * sxy / (sxx * syy))
}
