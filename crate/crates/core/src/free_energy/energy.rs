use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::LinearModel;
use super::state::VariationalState;
use crate::error::{Result, TapError};

/// Which free energy an optimizer targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Objective {
    Tap,
    Mf,
}

/// Value and gradient `(∂/∂m, ∂/∂s)` of a free energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad_m: DVector<f64>,
    pub grad_s: DVector<f64>,
}

impl Evaluation {
    /// `(‖∇_m‖² + ‖∇_s‖²)/p`
    pub fn grad_norm_sq_per_p(&self) -> f64 {
        (self.grad_m.norm_squared() + self.grad_s.norm_squared()) / self.grad_m.len() as f64
    }
}

fn check(model: &LinearModel, state: &VariationalState) -> Result<()> {
    if model.p() != state.p() {
        return Err(TapError::Shape(format!(
            "model has p={} but state has p={}",
            model.p(),
            state.p()
        )));
    }
    Ok(())
}

fn constant_term(model: &LinearModel) -> f64 {
    0.5 * model.n() as f64 * (2.0 * std::f64::consts::PI * model.sigma2()).ln()
}

fn correction(model: &LinearModel, state: &VariationalState, objective: Objective) -> f64 {
    let n = model.n() as f64;
    let x = state.mean_variance() / model.sigma2();
    match objective {
        Objective::Tap => 0.5 * n * x.ln_1p(),
        Objective::Mf => 0.5 * n * x,
    }
}

fn value_with_residual(
    model: &LinearModel,
    state: &VariationalState,
    residual: &DVector<f64>,
    objective: Objective,
) -> f64 {
    constant_term(model)
        + state.relative_entropy()
        + residual.norm_squared() / (2.0 * model.sigma2())
        + correction(model, state, objective)
}

/// Free energy value for the chosen objective.
pub fn energy(model: &LinearModel, state: &VariationalState, objective: Objective) -> Result<f64> {
    check(model, state)?;
    let r = model.residual(state.m());
    Ok(value_with_residual(model, state, &r, objective))
}

/// TAP free energy:
/// `(n/2)log 2πσ² + D₀ + ‖y − Xm‖²/(2σ²) + (n/2)log(1 + (S − Q)/σ²)`.
pub fn tap_energy(model: &LinearModel, state: &VariationalState) -> Result<f64> {
    energy(model, state, Objective::Tap)
}

/// Naive mean-field free energy: the log term of [`tap_energy`] replaced by
/// `(n/(2σ²))(S − Q)`.
pub fn mf_energy(model: &LinearModel, state: &VariationalState) -> Result<f64> {
    energy(model, state, Objective::Mf)
}

/// `tap_energy − mf_energy = (n/2)[log(1 + x) − x]`, `x = (S − Q)/σ²`; never positive.
pub fn onsager_correction(model: &LinearModel, state: &VariationalState) -> f64 {
    let n = model.n() as f64;
    let x = state.mean_variance() / model.sigma2();
    0.5 * n * (x.ln_1p() - x)
}

/// Exact variational objective `E_Q[log Q/(P(y|β)P₀(β))]` of the product law
/// with these marginals: the mean-field energy with each coordinate's variance
/// weighted by its own column norm `‖x_j‖²` rather than `n/p`.
/// It upper-bounds `−log P(y)` for every state.
pub fn mf_energy_exact(model: &LinearModel, state: &VariationalState) -> Result<f64> {
    check(model, state)?;
    let r = model.residual(state.m());
    let weighted: f64 = model
        .x()
        .column_iter()
        .enumerate()
        .map(|(j, col)| col.norm_squared() * (state.s()[j] - state.m()[j] * state.m()[j]))
        .sum();
    Ok(constant_term(model)
        + state.relative_entropy()
        + r.norm_squared() / (2.0 * model.sigma2())
        + weighted / (2.0 * model.sigma2()))
}

/// Value and gradient sharing one residual and one transposed product.
///
/// TAP: `∇_m = λ − Xᵀ(y − Xm)/σ² − (n/p) m/V`, `∇_s = −γ/2 + (n/p)/(2V)`;
/// MF replaces `V` by `σ²`.
pub fn evaluate(model: &LinearModel, state: &VariationalState, objective: Objective) -> Result<Evaluation> {
    check(model, state)?;
    let r = model.residual(state.m());
    let value = value_with_residual(model, state, &r, objective);
    let (grad_m, grad_s) = gradient_with_residual(model, state, &r, objective);
    Ok(Evaluation {
        value,
        grad_m,
        grad_s,
    })
}

pub(crate) fn gradient_with_residual(
    model: &LinearModel,
    state: &VariationalState,
    residual: &DVector<f64>,
    objective: Objective,
) -> (DVector<f64>, DVector<f64>) {
    let sigma2 = model.sigma2();
    let ratio = model.delta_hat();
    let denom = match objective {
        Objective::Tap => state.v(sigma2),
        Objective::Mf => sigma2,
    };
    let xtr = model.x().tr_mul(residual);
    let p = state.p();
    let mut grad_m = DVector::zeros(p);
    let mut grad_s = DVector::zeros(p);
    for (j, d) in state.duals().iter().enumerate() {
        grad_m[j] = d.lambda - xtr[j] / sigma2 - ratio * state.m()[j] / denom;
        grad_s[j] = -0.5 * d.gamma + 0.5 * ratio / denom;
    }
    (grad_m, grad_s)
}

/// `∇F_TAP` as `(∇_m, ∇_s)`.
pub fn tap_gradient(model: &LinearModel, state: &VariationalState) -> Result<(DVector<f64>, DVector<f64>)> {
    check(model, state)?;
    let r = model.residual(state.m());
    Ok(gradient_with_residual(model, state, &r, Objective::Tap))
}

/// `∇F_MF` as `(∇_m, ∇_s)`.
pub fn mf_gradient(model: &LinearModel, state: &VariationalState) -> Result<(DVector<f64>, DVector<f64>)> {
    check(model, state)?;
    let r = model.residual(state.m());
    Ok(gradient_with_residual(model, state, &r, Objective::Mf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_energy::test_support::{join, random_model, random_state, split};
    use crate::oracle::fd_check;
    use crate::scalar_channel::Prior;
    use std::f64::consts::PI;

    fn energy_at(model: &LinearModel, prior: &Prior, v: &[f64], obj: Objective) -> Result<f64> {
        let (m, s) = split(v);
        energy(model, &VariationalState::from_moments(prior, &m, &s)?, obj)
    }

    #[test]
    fn null_state_value() {
        let model = random_model(30, 20, 0.5, 1);
        let prior = Prior::three_point();
        let st = VariationalState::null_state(&prior, 20);
        let n = 30.0;
        let expected = 0.5 * n * (2.0 * PI * 0.5).ln()
            + model.y().norm_squared() / (2.0 * 0.5)
            + 0.5 * n * (1.0f64 + (2.0 / 3.0) / 0.5).ln();
        assert!((tap_energy(&model, &st).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn onsager_identity_and_ordering() {
        let model = random_model(40, 20, 0.3, 2);
        let prior = Prior::three_point();
        for seed in 0..20 {
            let st = random_state(&prior, 20, seed);
            let tap = tap_energy(&model, &st).unwrap();
            let mf = mf_energy(&model, &st).unwrap();
            let ons = onsager_correction(&model, &st);
            assert!(ons <= 0.0);
            assert!(mf >= tap);
            assert!((tap - mf - ons).abs() < 1e-9 * (1.0 + tap.abs()));
        }
    }

    #[test]
    fn energies_meet_as_variance_vanishes() {
        let model = random_model(20, 10, 0.4, 3);
        let prior = Prior::three_point();
        let mut last = f64::INFINITY;
        for g in [1e1, 1e2, 1e3, 1e4] {
            let duals = (0..10)
                .map(|j| crate::scalar_channel::DualPair::new(g * [-1.0, 0.0, 1.0][j % 3] + 0.3, g))
                .collect();
            let st = VariationalState::from_duals(&prior, duals).unwrap();
            let gap = mf_energy(&model, &st).unwrap() - tap_energy(&model, &st).unwrap();
            assert!(gap >= 0.0 && gap <= last);
            last = gap;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = random_model(40, 20, 0.5, 4);
        let prior = Prior::three_point();
        for obj in [Objective::Tap, Objective::Mf] {
            for seed in 0..20 {
                let st = random_state(&prior, 20, 100 + seed);
                let point = join(st.m(), st.s());
                let report = fd_check(
                    |v| energy_at(&model, &prior, v, obj),
                    |v| {
                        let (m, s) = split(v);
                        let st = VariationalState::from_moments(&prior, &m, &s)?;
                        let e = evaluate(&model, &st, obj)?;
                        Ok(join(&e.grad_m, &e.grad_s))
                    },
                    &point,
                    1e-5,
                    1e-6,
                )
                .unwrap();
                assert!(report.passed, "{obj:?} seed {seed}: {}", report.max_rel_error);
            }
        }
    }

    #[test]
    fn mf_gradient_differs_only_in_variance_term() {
        let model = random_model(40, 20, 0.5, 5);
        let prior = Prior::three_point();
        let st = random_state(&prior, 20, 6);
        let (tm, ts) = tap_gradient(&model, &st).unwrap();
        let (mm, ms) = mf_gradient(&model, &st).unwrap();
        let c = model.delta_hat();
        let (v, s2) = (st.v(model.sigma2()), model.sigma2());
        for j in 0..20 {
            assert!((tm[j] - mm[j] - c * st.m()[j] * (1.0 / s2 - 1.0 / v)).abs() < 1e-10);
            assert!((ts[j] - ms[j] - 0.5 * c * (1.0 / v - 1.0 / s2)).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_mean_field_objective_by_enumeration() {
        let model = random_model(6, 3, 0.7, 7);
        let prior = Prior::three_point();
        let st = random_state(&prior, 3, 8);
        let locs = prior.locations();
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let idx = [a, b, c];
                    let mut logq = 0.0;
                    let mut q = 1.0;
                    let beta = DVector::from_fn(3, |j, _| locs[idx[j]]);
                    for j in 0..3 {
                        let d = st.duals()[j];
                        let x = beta[j];
                        let lq = (1.0f64 / 3.0).ln() - 0.5 * d.gamma * x * x + d.lambda * x - st.log_partition()[j];
                        logq += lq;
                        q *= lq.exp();
                    }
                    let r = model.y() - model.x() * &beta;
                    let loglik = -0.5 * 6.0 * (2.0 * PI * 0.7).ln() - r.norm_squared() / 1.4;
                    let logprior = 3.0 * (1.0f64 / 3.0).ln();
                    acc += q * (logq - loglik - logprior);
                }
            }
        }
        assert!((mf_energy_exact(&model, &st).unwrap() - acc).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let model = random_model(10, 5, 1.0, 9);
        let st = VariationalState::null_state(&Prior::three_point(), 4);
        assert!(tap_energy(&model, &st).is_err());
    }
}
