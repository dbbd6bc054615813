//! The scalar Gaussian channel `λ = γβ₀ + √γ z` and its Bayes quantities.

use super::prior::Prior;
use super::quadrature::QuadratureSpec;
use super::tilt::tilted_first_two;

/// Posterior-mean and second-moment denoiser, coordinatewise
/// `(⟨β⟩_{γx_j,γ}, ⟨β²⟩_{γx_j,γ})`.
pub fn denoise(prior: &Prior, x: &[f64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut m = Vec::with_capacity(x.len());
    let mut s = Vec::with_capacity(x.len());
    for &xj in x {
        let (mj, sj, _) = tilted_first_two(prior, gamma * xj, gamma);
        m.push(mj);
        s.push(sj);
    }
    (m, s)
}

/// Bayes quantities of the scalar channel at one signal-to-noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub gamma: f64,
    /// `E[(β₀ - E[β₀|λ])²]`
    pub mmse: f64,
    /// Mutual information `I(β₀; λ)`
    pub mutual_info: f64,
    /// `E[Var(β₀|λ)²]`
    pub mean_var_sq: f64,
}

/// All channel expectations at `gamma` in one pass: exact sum over prior atoms
/// for `β₀`, Gauss–Hermite over `z`.
pub fn channel_stats(prior: &Prior, gamma: f64, quad: &QuadratureSpec) -> ChannelStats {
    debug_assert!(gamma >= 0.0, "channel SNR must be nonnegative");
    let gamma = gamma.max(0.0);
    let root = gamma.sqrt();
    let rule = quad.rule();
    let mut mmse = 0.0;
    let mut mi = 0.0;
    let mut var_sq = 0.0;
    for (&b0, &w0) in prior.locations().iter().zip(prior.weights()) {
        let (mut e_mse, mut e_mi, mut e_v2) = (0.0, 0.0, 0.0);
        for (&z, &wz) in rule.nodes().iter().zip(rule.weights()) {
            let lambda = gamma * b0 + root * z;
            let (m, s, log_z) = tilted_first_two(prior, lambda, gamma);
            let v = (s - m * m).max(0.0);
            e_mse += wz * (b0 - m) * (b0 - m);
            e_mi += wz * (0.5 * gamma * b0 * b0 - log_z);
            e_v2 += wz * v * v;
        }
        mmse += w0 * e_mse;
        mi += w0 * e_mi;
        var_sq += w0 * e_v2;
    }
    ChannelStats {
        gamma,
        mmse,
        mutual_info: mi.max(0.0),
        mean_var_sq: var_sq,
    }
}

/// Bayes risk of the scalar channel at signal-to-noise `gamma ≥ 0`.
pub fn mmse(prior: &Prior, gamma: f64, quad: &QuadratureSpec) -> f64 {
    if gamma == 0.0 {
        return prior.variance();
    }
    let root = gamma.sqrt();
    let rule = quad.rule();
    prior
        .locations()
        .iter()
        .zip(prior.weights())
        .map(|(&b0, &w0)| {
            w0 * rule.expect(|z| {
                let (m, _, _) = tilted_first_two(prior, gamma * b0 + root * z, gamma);
                (b0 - m) * (b0 - m)
            })
        })
        .sum()
}
