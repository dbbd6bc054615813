//! The two-parameter exponential family `P_{λ,γ}(dβ) ∝ exp(-γβ²/2 + λβ) P₀(dβ)`
//! and its moment/natural-parameter duality.

use serde::{Deserialize, Serialize};

use super::prior::Prior;
use crate::error::{Result, TapError};

/// Absolute tolerance for classifying a moment pair as on the boundary of Γ.
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Moment residual at which [`dual_solve`] stops.
pub const DUAL_RESIDUAL_TOL: f64 = 1e-10;
/// Magnitude cap on either natural parameter.
pub const DUAL_CAP: f64 = 1e6;
const DUAL_MAX_ITERS: usize = 200;

/// Natural parameters `(λ, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DualPair {
    pub lambda: f64,
    pub gamma: f64,
}

impl DualPair {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma }
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.is_finite() && self.gamma.is_finite()
    }

    fn clamped(self) -> (Self, bool) {
        let l = self.lambda.clamp(-DUAL_CAP, DUAL_CAP);
        let g = self.gamma.clamp(-DUAL_CAP, DUAL_CAP);
        (Self::new(l, g), l != self.lambda || g != self.gamma)
    }
}

/// First and second moments `(m, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentPair {
    pub m: f64,
    pub s: f64,
}

impl MomentPair {
    pub fn new(m: f64, s: f64) -> Self {
        Self { m, s }
    }

    pub fn variance(&self) -> f64 {
        self.s - self.m * self.m
    }
}

/// Moments, log-partition and covariance of `(β, β²)` under `P_{λ,γ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedSummary {
    pub m: f64,
    pub s: f64,
    /// `log E_{P₀}[exp(-γβ²/2 + λβ)]`
    pub log_partition: f64,
    /// `[[Var β, Cov(β,β²)], [Cov(β,β²), Var β²]]`
    pub cov_matrix: [[f64; 2]; 2],
}

impl TiltedSummary {
    pub fn moments(&self) -> MomentPair {
        MomentPair::new(self.m, self.s)
    }
}

/// Position of a moment pair relative to Γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaRegion {
    Interior,
    Boundary,
    Exterior,
}

#[inline]
fn exponent(log_w: f64, x: f64, lambda: f64, gamma: f64) -> f64 {
    log_w - 0.5 * gamma * x * x + lambda * x
}

#[inline]
fn max_exponent(prior: &Prior, lambda: f64, gamma: f64) -> f64 {
    prior
        .locations()
        .iter()
        .zip(prior.log_weights())
        .map(|(&x, &lw)| exponent(lw, x, lambda, gamma))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean, second moment and log-partition without the covariance pass.
#[inline]
pub(crate) fn tilted_first_two(prior: &Prior, lambda: f64, gamma: f64) -> (f64, f64, f64) {
    let shift = max_exponent(prior, lambda, gamma);
    let mut z = 0.0;
    let mut m = 0.0;
    let mut s = 0.0;
    for (&x, &lw) in prior.locations().iter().zip(prior.log_weights()) {
        let e = (exponent(lw, x, lambda, gamma) - shift).exp();
        z += e;
        m += e * x;
        s += e * x * x;
    }
    (m / z, s / z, shift + z.ln())
}

/// Moments of `P_{λ,γ}` by max-shifted weighted sums over the atoms.
pub fn tilted_moments(prior: &Prior, dual: DualPair) -> Result<TiltedSummary> {
    let DualPair { lambda, gamma } = dual;
    let degenerate = || TapError::DegenerateTilt { lambda, gamma };
    if !dual.is_finite() {
        return Err(degenerate());
    }
    let shift = max_exponent(prior, lambda, gamma);
    if !shift.is_finite() {
        return Err(degenerate());
    }
    let probs: Vec<f64> = prior
        .locations()
        .iter()
        .zip(prior.log_weights())
        .map(|(&x, &lw)| (exponent(lw, x, lambda, gamma) - shift).exp())
        .collect();
    let z: f64 = probs.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(degenerate());
    }
    let mut m = 0.0;
    let mut s = 0.0;
    for (&x, &p) in prior.locations().iter().zip(&probs) {
        m += p * x;
        s += p * x * x;
    }
    m /= z;
    s /= z;
    let (mut vb, mut c, mut vb2) = (0.0, 0.0, 0.0);
    for (&x, &p) in prior.locations().iter().zip(&probs) {
        let d1 = x - m;
        let d2 = x * x - s;
        vb += p * d1 * d1;
        c += p * d1 * d2;
        vb2 += p * d2 * d2;
    }
    vb /= z;
    c /= z;
    vb2 /= z;
    Ok(TiltedSummary {
        m,
        s,
        log_partition: shift + z.ln(),
        cov_matrix: [[vb, c], [c, vb2]],
    })
}

/// `⟨1{β ≠ 0}⟩_{λ,γ}`: the tilted mass outside the prior's point mass at zero.
pub fn inclusion_probability(prior: &Prior, dual: DualPair) -> f64 {
    let Some((idx, frac)) = prior.zero_atom() else {
        return 1.0;
    };
    let shift = max_exponent(prior, dual.lambda, dual.gamma);
    let mut z = 0.0;
    let mut zero = 0.0;
    for (i, (&x, &lw)) in prior.locations().iter().zip(prior.log_weights()).enumerate() {
        let e = (exponent(lw, x, dual.lambda, dual.gamma) - shift).exp();
        z += e;
        if i == idx {
            zero = e;
        }
    }
    (1.0 - frac * zero / z).clamp(0.0, 1.0)
}

/// Lower and upper envelopes of Γ at first moment `m`.
pub fn envelopes(prior: &Prior, m: f64) -> (f64, f64) {
    let (a, b) = prior.bracket(m);
    let (a0, b0) = (prior.support_min(), prior.support_max());
    ((a + b) * m - a * b, (a0 + b0) * m - a0 * b0)
}

/// Classifies `(m, s)` against the explicit description of Γ for an atomic prior.
pub fn gamma_region(prior: &Prior, mp: MomentPair) -> GammaRegion {
    let MomentPair { m, s } = mp;
    if !(m.is_finite() && s.is_finite()) {
        return GammaRegion::Exterior;
    }
    let (a0, b0) = (prior.support_min(), prior.support_max());
    if m < a0 - BOUNDARY_TOL || m > b0 + BOUNDARY_TOL {
        return GammaRegion::Exterior;
    }
    let (lower, upper) = envelopes(prior, m.clamp(a0, b0));
    if s < lower - BOUNDARY_TOL || s > upper + BOUNDARY_TOL {
        return GammaRegion::Exterior;
    }
    let inside_m = m > a0 + BOUNDARY_TOL && m < b0 - BOUNDARY_TOL;
    let inside_s = s > lower + BOUNDARY_TOL && s < upper - BOUNDARY_TOL;
    if inside_m && inside_s {
        GammaRegion::Interior
    } else {
        GammaRegion::Boundary
    }
}

/// Nudges a boundary pair back inside Γ by a small fraction of the envelope gap.
pub fn project_interior(prior: &Prior, mp: MomentPair) -> MomentPair {
    let (a0, b0) = (prior.support_min(), prior.support_max());
    let span = b0 - a0;
    let m = mp.m.clamp(a0 + 1e-9 * span, b0 - 1e-9 * span);
    let (lower, upper) = envelopes(prior, m);
    let eps = (1e-9 * (upper - lower)).max(2.0 * BOUNDARY_TOL);
    let s = mp.s.clamp(lower + eps, upper - eps);
    MomentPair::new(m, s)
}

fn dual_objective(mp: MomentPair, dual: DualPair, log_partition: f64) -> f64 {
    -0.5 * dual.gamma * mp.s + dual.lambda * mp.m - log_partition
}

/// Inverts the moment map: finds `(λ, γ)` with `⟨β⟩ = m`, `⟨β²⟩ = s`.
///
/// Damped Newton ascent on the concave dual objective, starting at `init` or
/// the origin. On failure the best iterate is returned inside
/// [`TapError::NoConvergence`].
pub fn dual_solve(prior: &Prior, mp: MomentPair, init: Option<DualPair>) -> Result<DualPair> {
    if gamma_region(prior, mp) != GammaRegion::Interior {
        return Err(TapError::NotInDomain { m: mp.m, s: mp.s });
    }
    let mut dual = init.filter(DualPair::is_finite).unwrap_or_default().clamped().0;
    let mut t = tilted_moments(prior, dual)?;
    let mut obj = dual_objective(mp, dual, t.log_partition);
    let mut residual = (mp.m - t.m).hypot(mp.s - t.s);

    for it in 0..DUAL_MAX_ITERS {
        if residual < DUAL_RESIDUAL_TOL {
            return Ok(dual);
        }
        // Newton in (λ, η = -γ/2): Cov · d = (m - ⟨β⟩, s - ⟨β²⟩)
        let [[a, b], [_, c]] = t.cov_matrix;
        let (r1, r2) = (mp.m - t.m, mp.s - t.s);
        let mut det = a * c - b * b;
        let (mut a_r, mut c_r) = (a, c);
        let scale = (a + c).abs().max(f64::MIN_POSITIVE);
        if !(det > 1e-14 * scale * scale) {
            let ridge = 1e-10 * scale;
            a_r += ridge;
            c_r += ridge;
            det = a_r * c_r - b * b;
        }
        let d_lambda = (c_r * r1 - b * r2) / det;
        let d_eta = (a_r * r2 - b * r1) / det;
        let direction = DualPair::new(d_lambda, -2.0 * d_eta);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (cand, _) = DualPair::new(
                dual.lambda + step * direction.lambda,
                dual.gamma + step * direction.gamma,
            )
            .clamped();
            if let Ok(tc) = tilted_moments(prior, cand) {
                let oc = dual_objective(mp, cand, tc.log_partition);
                let rc = (mp.m - tc.m).hypot(mp.s - tc.s);
                let flat = (oc - obj).abs() <= 4.0 * f64::EPSILON * (1.0 + obj.abs());
                if oc > obj || (flat && rc < residual) {
                    dual = cand;
                    t = tc;
                    obj = oc;
                    residual = rc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return if residual < DUAL_RESIDUAL_TOL {
                Ok(dual)
            } else {
                Err(TapError::NoConvergence {
                    best: dual,
                    residual,
                    iterations: it + 1,
                })
            };
        }
    }
    if residual < DUAL_RESIDUAL_TOL {
        Ok(dual)
    } else {
        Err(TapError::NoConvergence {
            best: dual,
            residual,
            iterations: DUAL_MAX_ITERS,
        })
    }
}

/// `-h(m, s)`: Kullback–Leibler divergence of `P_{λ(m,s),γ(m,s)}` from `P₀`.
pub fn neg_entropy(prior: &Prior, mp: MomentPair) -> Result<f64> {
    let dual = dual_solve(prior, mp, None)?;
    neg_entropy_at(prior, mp, dual)
}

/// `-h` evaluated at a known dual point for `mp`.
pub fn neg_entropy_at(prior: &Prior, mp: MomentPair, dual: DualPair) -> Result<f64> {
    let t = tilted_moments(prior, dual)?;
    Ok(dual_objective(mp, dual, t.log_partition).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp() -> Prior {
        Prior::three_point()
    }

    #[test]
    fn untilted_moments() {
        let t = tilted_moments(&tp(), DualPair::new(0.0, 0.0)).unwrap();
        assert!(t.m.abs() < 1e-15);
        assert!((t.s - 2.0 / 3.0).abs() < 1e-15);
        assert!(t.log_partition.abs() < 1e-15);
    }

    #[test]
    fn large_lambda_three_point() {
        let t = tilted_moments(&tp(), DualPair::new(10.0, 0.0)).unwrap();
        let e = 10f64.exp();
        let expected = (e - 1.0 / e) / (e + 1.0 + 1.0 / e);
        assert!((t.m - expected).abs() < 1e-14);
        assert!((t.m - 0.999_954_6).abs() < 1e-7);
    }

    #[test]
    fn extreme_tilts_do_not_overflow() {
        let t = tilted_moments(&tp(), DualPair::new(DUAL_CAP, -DUAL_CAP)).unwrap();
        assert!((t.m - 1.0).abs() < 1e-12);
        assert!(tilted_moments(&tp(), DualPair::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn region_examples() {
        let p = tp();
        assert_eq!(gamma_region(&p, MomentPair::new(0.5, 0.7)), GammaRegion::Interior);
        assert_eq!(gamma_region(&p, MomentPair::new(0.5, 1.0)), GammaRegion::Boundary);
        assert_eq!(gamma_region(&p, MomentPair::new(1.5, 1.0)), GammaRegion::Exterior);
        assert_eq!(gamma_region(&p, MomentPair::new(0.5, 0.5)), GammaRegion::Boundary);
        assert_eq!(gamma_region(&p, MomentPair::new(0.5, 0.4)), GammaRegion::Exterior);
        assert_eq!(gamma_region(&p, MomentPair::new(0.0, 0.3)), GammaRegion::Interior);
        assert_eq!(gamma_region(&p, MomentPair::new(0.0, 0.0)), GammaRegion::Boundary);
    }

    #[test]
    fn dual_solve_examples() {
        let p = tp();
        let d = dual_solve(&p, MomentPair::new(0.0, 2.0 / 3.0), None).unwrap();
        assert!(d.lambda.abs() < 1e-9 && d.gamma.abs() < 1e-9);

        let target = DualPair::new(0.3, 1.2);
        let t = tilted_moments(&p, target).unwrap();
        let back = dual_solve(&p, t.moments(), None).unwrap();
        assert!((back.lambda - 0.3).abs() < 1e-8);
        assert!((back.gamma - 1.2).abs() < 1e-8);

        let g90 = dual_solve(&p, MomentPair::new(0.0, 0.9), None).unwrap().gamma;
        let g99 = dual_solve(&p, MomentPair::new(0.0, 0.99), None).unwrap().gamma;
        assert!(g99 < g90 && g90 < 0.0);
    }

    #[test]
    fn dual_solve_rejects_outside() {
        let p = tp();
        assert!(matches!(
            dual_solve(&p, MomentPair::new(0.5, 1.0), None),
            Err(TapError::NotInDomain { .. })
        ));
        assert!(dual_solve(&p, MomentPair::new(2.0, 4.0), None).is_err());
    }

    #[test]
    fn entropy_examples() {
        let p = tp();
        assert!(neg_entropy(&p, MomentPair::new(0.0, 2.0 / 3.0)).unwrap().abs() < 1e-12);
        let mp = MomentPair::new(0.5, 0.7);
        let h = neg_entropy(&p, mp).unwrap();
        assert!(h > 0.0);
        // direct KL sum over atoms
        let d = dual_solve(&p, mp, None).unwrap();
        let t = tilted_moments(&p, d).unwrap();
        let kl: f64 = p
            .locations()
            .iter()
            .zip(p.weights())
            .map(|(&x, &w)| {
                let q = w * (-0.5 * d.gamma * x * x + d.lambda * x - t.log_partition).exp();
                q * (q / w).ln()
            })
            .sum();
        assert!((h - kl).abs() < 1e-12);
    }

    #[test]
    fn entropy_gradient_is_dual() {
        let p = tp();
        let mp = MomentPair::new(0.2, 0.6);
        let d = dual_solve(&p, mp, None).unwrap();
        let eps = 1e-6;
        let f = |m: f64, s: f64| neg_entropy(&p, MomentPair::new(m, s)).unwrap();
        let gm = (f(mp.m + eps, mp.s) - f(mp.m - eps, mp.s)) / (2.0 * eps);
        let gs = (f(mp.m, mp.s + eps) - f(mp.m, mp.s - eps)) / (2.0 * eps);
        assert!((gm - d.lambda).abs() < 1e-6);
        assert!((gs + 0.5 * d.gamma).abs() < 1e-6);
    }

    #[test]
    fn inclusion_probability_symmetric() {
        let p = tp();
        // λ = 0: P(β ≠ 0) = 2e^{-γ/2} / (1 + 2e^{-γ/2})
        let g = 1.7;
        let e = (-0.5 * g).exp();
        let pip = inclusion_probability(&p, DualPair::new(0.0, g));
        assert!((pip - 2.0 * e / (1.0 + 2.0 * e)).abs() < 1e-15);
    }

    #[test]
    fn projection_lands_inside() {
        let p = tp();
        for mp in [MomentPair::new(0.5, 1.0), MomentPair::new(0.5, 0.5), MomentPair::new(1.0, 1.0)] {
            let q = project_interior(&p, mp);
            assert_eq!(gamma_region(&p, q), GammaRegion::Interior, "{mp:?} -> {q:?}");
        }
    }
}
