//! Bayes AMP for the linear model with the state-evolution Onsager term.
//!
//! ```text
//! z^k     = y − X m^k + (γ_{k−1} mmse(γ_{k−1}) / δ) z^{k−1}
//! m^{k+1} = η(m^k + Xᵀz^k/δ, γ_k),   s^{k+1} = η₂(m^k + Xᵀz^k/δ, γ_k)
//! γ_{k+1} = δ / (σ² + mmse(γ_k))
//! ```
//!
//! started from `z⁰ = 0`, `m¹ = 0`, `γ₁ = δ/(σ² + E β₀²)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, TapError};
use crate::free_energy::{gradient_with_residual, LinearModel, Objective, VariationalState};
use crate::rs_potential::{se_covariances_from, RsPotential};
use crate::scalar_channel::{tilted_first_two, DualPair, Prior, QuadratureSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AmpConfig {
    pub iterations: usize,
    /// Asymptotic aspect ratio; `None` uses the realized `n/p`.
    pub delta: Option<f64>,
    pub keep_trajectory: bool,
    /// Record `‖∇F_TAP‖²/p` at every iterate (two extra products per step).
    pub track_gradient: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            delta: None,
            keep_trajectory: false,
            track_gradient: true,
        }
    }
}

/// Per-iteration scalars; row `k` describes `m^{k+1}` produced with `γ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmpRecord {
    pub k: usize,
    pub gamma: f64,
    /// `‖m^{k+1} − β₀‖²/p` when the truth is known.
    pub mse_empirical: Option<f64>,
    /// `mmse(γ_k)`, the state-evolution prediction.
    pub mse_se: f64,
    pub grad_norm_sq_per_p: Option<f64>,
}

/// Iterates `m¹ … m^{T+1}` and `z¹ … z^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpTrajectory {
    pub m: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    /// Iterations run, `T`.
    pub k: usize,
    /// `m^{T+1}`
    pub m: DVector<f64>,
    /// `s^{T+1}`
    pub s: DVector<f64>,
    /// `z^T`
    pub z: DVector<f64>,
    /// `(γ_T x^T_j, γ_T)`: natural parameters of the last denoising step.
    pub duals: Vec<DualPair>,
    /// `γ₁ … γ_{T+1}`
    pub gammas: Vec<f64>,
    pub delta: f64,
    pub sigma2: f64,
    pub history: Vec<AmpRecord>,
    pub trajectory: Option<AmpTrajectory>,
}

impl AmpState {
    /// Variational state at the last iterate with its exact dual cache.
    pub fn to_variational(&self, prior: &Prior) -> Result<VariationalState> {
        VariationalState::from_duals(prior, self.duals.clone())
    }
}

/// Runs `T = cfg.iterations` AMP steps.
pub fn amp_run(
    model: &LinearModel,
    prior: &Prior,
    quad: &QuadratureSpec,
    cfg: &AmpConfig,
    truth: Option<&DVector<f64>>,
) -> Result<AmpState> {
    if cfg.iterations == 0 {
        return Err(TapError::Config("AMP needs at least one iteration".into()));
    }
    if let Some(b) = truth {
        if b.len() != model.p() {
            return Err(TapError::Shape("truth length differs from p".into()));
        }
    }
    let (n, p) = (model.n(), model.p());
    let sigma2 = model.sigma2();
    let delta = cfg.delta.unwrap_or_else(|| model.delta_hat());
    let se = RsPotential::new(prior.clone(), sigma2, delta, quad.clone())?;

    let mut m = DVector::zeros(p);
    let mut s = DVector::from_element(p, prior.second_moment());
    let mut z_prev = DVector::<f64>::zeros(n);
    let mut onsager = 0.0;
    let mut gamma = se.gamma_initial();
    let mut gammas = vec![gamma];
    let mut duals = vec![DualPair::default(); p];
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut traj = cfg.keep_trajectory.then(|| AmpTrajectory {
        m: vec![m.clone()],
        z: Vec::new(),
    });

    for k in 1..=cfg.iterations {
        let mut z = model.residual(&m);
        if k > 1 {
            z.axpy(onsager / delta, &z_prev, 1.0);
        }
        let x = &m + model.x().tr_mul(&z) / delta;
        for j in 0..p {
            let (mj, sj, _) = tilted_first_two(prior, gamma * x[j], gamma);
            m[j] = mj;
            s[j] = sj;
            duals[j] = DualPair::new(gamma * x[j], gamma);
        }
        let mmse_k = se.mmse(gamma);
        let grad = if cfg.track_gradient {
            let state = VariationalState::from_duals(prior, duals.clone())?;
            let r = model.residual(state.m());
            let (gm, gs) = gradient_with_residual(model, &state, &r, Objective::Tap);
            Some((gm.norm_squared() + gs.norm_squared()) / p as f64)
        } else {
            None
        };
        history.push(AmpRecord {
            k,
            gamma,
            mse_empirical: truth.map(|b| (&m - b).norm_squared() / p as f64),
            mse_se: mmse_k,
            grad_norm_sq_per_p: grad,
        });
        if let Some(t) = traj.as_mut() {
            t.m.push(m.clone());
            t.z.push(z.clone());
        }
        onsager = gamma * mmse_k;
        gamma = delta / (sigma2 + mmse_k);
        gammas.push(gamma);
        z_prev = z;
    }

    Ok(AmpState {
        k: cfg.iterations,
        m,
        s,
        z: z_prev,
        duals,
        gammas,
        delta,
        sigma2,
        history,
        trajectory: traj,
    })
}

/// Empirical Gram matrices of the AMP error columns against the
/// state-evolution covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub k: usize,
    /// `VᵀV/p`, columns `ν^{k'} = m^{k'} − β₀`
    pub vtv: DMatrix<f64>,
    /// `RᵀR/n`, columns `r^{k'} = −z^{k'}`
    pub rtr: DMatrix<f64>,
    pub k_h: DMatrix<f64>,
    pub k_g: DMatrix<f64>,
    /// `‖VᵀV/p − K_h‖_max`
    pub vtv_deviation: f64,
    /// `‖RᵀR/n − δ K_g‖_max`
    pub rtr_deviation: f64,
}

pub fn se_diagnostics(amp: &AmpState, model: &LinearModel, truth: &DVector<f64>, k: usize) -> Result<SeReport> {
    let traj = amp
        .trajectory
        .as_ref()
        .ok_or_else(|| TapError::Config("AMP run did not keep its trajectory".into()))?;
    if k == 0 || k > amp.k {
        return Err(TapError::Config(format!("k must be in 1..={}", amp.k)));
    }
    let (n, p) = (model.n() as f64, model.p() as f64);
    let v = DMatrix::from_columns(&traj.m[..k].iter().map(|mk| mk - truth).collect::<Vec<_>>());
    let r = DMatrix::from_columns(&traj.z[..k].iter().map(|zk| -zk).collect::<Vec<_>>());
    let vtv = v.tr_mul(&v) / p;
    let rtr = r.tr_mul(&r) / n;
    let cov = se_covariances_from(&amp.gammas[..k], amp.sigma2, amp.delta);
    let vtv_deviation = (&vtv - &cov.k_h).amax();
    let rtr_deviation = (&rtr - &cov.k_g * amp.delta).amax();
    Ok(SeReport {
        k,
        vtv,
        rtr,
        k_h: cov.k_h,
        k_g: cov.k_g,
        vtv_deviation,
        rtr_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_channel::denoise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn instance(n: usize, p: usize, sigma: f64, seed: u64) -> (LinearModel, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (p as f64).sqrt();
        let x = DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(p, |_, _| [-1.0, 0.0, 1.0][rng.random_range(0..3)]);
        let noise = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * &beta + noise;
        (LinearModel::new(x, y, sigma * sigma).unwrap(), beta)
    }

    #[test]
    fn first_step_unrolled() {
        let (model, _) = instance(80, 60, 0.3, 1);
        let prior = Prior::three_point();
        let quad = QuadratureSpec::default();
        let cfg = AmpConfig {
            iterations: 1,
            ..AmpConfig::default()
        };
        let st = amp_run(&model, &prior, &quad, &cfg, None).unwrap();
        let delta = model.delta_hat();
        let g1 = delta / (0.09 + prior.second_moment());
        let x: Vec<f64> = (model.x().tr_mul(model.y()) / delta).iter().copied().collect();
        let (m, s) = denoise(&prior, &x, g1);
        for j in 0..60 {
            assert!((st.m[j] - m[j]).abs() < 1e-14);
            assert!((st.s[j] - s[j]).abs() < 1e-14);
        }
        assert_eq!(&st.z, model.y());
    }

    #[test]
    fn gamma_sequence_shared_with_state_evolution() {
        let (model, truth) = instance(100, 100, 0.3, 2);
        let prior = Prior::three_point();
        let quad = QuadratureSpec::default();
        let cfg = AmpConfig {
            iterations: 10,
            ..AmpConfig::default()
        };
        let st = amp_run(&model, &prior, &quad, &cfg, Some(&truth)).unwrap();
        let se = RsPotential::new(prior, 0.09, 1.0, quad).unwrap();
        assert_eq!(st.gammas, se.gamma_sequence(11));
        assert!(st.gammas.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        assert_eq!(st.history.len(), 10);
    }

    #[test]
    fn stationarity_improves_along_iterations() {
        let (model, truth) = instance(1000, 1000, 0.3, 3);
        let prior = Prior::three_point();
        let cfg = AmpConfig {
            iterations: 10,
            ..AmpConfig::default()
        };
        let st = amp_run(&model, &prior, &QuadratureSpec::default(), &cfg, Some(&truth)).unwrap();
        let g: Vec<f64> = st.history.iter().map(|r| r.grad_norm_sq_per_p.unwrap()).collect();
        assert!(g[9] < g[1], "{g:?}");
    }

    #[test]
    fn first_column_of_diagnostics() {
        let (model, truth) = instance(300, 300, 0.3, 4);
        let prior = Prior::three_point();
        let cfg = AmpConfig {
            iterations: 3,
            keep_trajectory: true,
            ..AmpConfig::default()
        };
        let st = amp_run(&model, &prior, &QuadratureSpec::default(), &cfg, Some(&truth)).unwrap();
        let rep = se_diagnostics(&st, &model, &truth, 1).unwrap();
        assert!((rep.vtv[(0, 0)] - truth.norm_squared() / 300.0).abs() < 1e-14);
        assert!((rep.k_h[(0, 0)] - prior.second_moment()).abs() < 1e-12);
        assert!(se_diagnostics(&st, &model, &truth, 4).is_err());
    }

    #[test]
    fn deterministic_and_requires_iterations() {
        let (model, truth) = instance(50, 40, 0.3, 5);
        let prior = Prior::three_point();
        let quad = QuadratureSpec::default();
        let cfg = AmpConfig::default();
        let a = amp_run(&model, &prior, &quad, &cfg, Some(&truth)).unwrap();
        let b = amp_run(&model, &prior, &quad, &cfg, Some(&truth)).unwrap();
        assert_eq!(a, b);
        let zero = AmpConfig {
            iterations: 0,
            ..cfg
        };
        assert!(amp_run(&model, &prior, &quad, &zero, None).is_err());
    }
}
