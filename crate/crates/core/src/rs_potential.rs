//! Replica-symmetric potential
//!
//! `φ(γ) = σ²γ/2 − (δ/2) log(γ/(2πδ)) + i(γ)`, where `i` is the mutual
//! information of the scalar channel. Its critical points solve
//! `mmse(γ) = δ/γ − σ²`; the global minimizer is `γ_stat` and the smallest
//! fixed point, the limit of the state-evolution recursion
//! `γ_{k+1} = δ/(σ² + mmse(γ_k))`, is `γ_alg`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapError};
use crate::scalar_channel::{channel_stats, mmse, ChannelStats, Prior, QuadratureSpec};

const DEGENERATE_CURVATURE: f64 = 1e-8;
const TIE_TOL: f64 = 1e-9;
const EASY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Easy,
    Hard,
    Degenerate,
}

/// Log-spaced grid on `[lo_factor·δ/σ², hi_factor·δ/σ²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub lo_factor: f64,
    pub hi_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 400,
            lo_factor: 1e-4,
            hi_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialProfile {
    pub gamma_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_prime: Vec<f64>,
    pub phi_second: Vec<f64>,
    pub gamma_stat: f64,
    pub gamma_alg: f64,
    pub regime: Regime,
    /// `φ''(γ_stat)`
    pub curvature_at_stat: f64,
    /// All local minimizers found on the grid, ascending.
    pub local_minima: Vec<f64>,
}

/// State-evolution covariances `K_g`, `K_h` for `γ₁ … γ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeCovariances {
    pub k_g: DMatrix<f64>,
    pub k_h: DMatrix<f64>,
    pub gamma_seq: Vec<f64>,
}

/// Scalar channel together with the linear-model parameters `(σ², δ)`.
#[derive(Debug, Clone)]
pub struct RsPotential {
    prior: Prior,
    sigma2: f64,
    delta: f64,
    quad: QuadratureSpec,
}

impl RsPotential {
    pub fn new(prior: Prior, sigma2: f64, delta: f64, quad: QuadratureSpec) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(TapError::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(TapError::Domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            prior,
            sigma2,
            delta,
            quad,
        })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    fn check(gamma: f64) -> Result<()> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(())
        } else {
            Err(TapError::Domain(format!("potential requires gamma > 0, got {gamma}")))
        }
    }

    pub fn mmse(&self, gamma: f64) -> f64 {
        mmse(&self.prior, gamma, &self.quad)
    }

    pub fn stats(&self, gamma: f64) -> ChannelStats {
        channel_stats(&self.prior, gamma, &self.quad)
    }

    fn phi_from(&self, st: &ChannelStats) -> f64 {
        let g = st.gamma;
        0.5 * self.sigma2 * g
            - 0.5 * self.delta * (g / (2.0 * std::f64::consts::PI * self.delta)).ln()
            + st.mutual_info
    }

    fn phi_prime_from(&self, st: &ChannelStats) -> f64 {
        0.5 * (self.sigma2 - self.delta / st.gamma + st.mmse)
    }

    fn phi_second_from(&self, st: &ChannelStats) -> f64 {
        0.5 * (self.delta / (st.gamma * st.gamma) - st.mean_var_sq)
    }

    /// `φ(γ)` with the mutual information computed by double quadrature.
    pub fn phi(&self, gamma: f64) -> Result<f64> {
        Self::check(gamma)?;
        Ok(self.phi_from(&self.stats(gamma)))
    }

    /// `φ'(γ) = ½(σ² − δ/γ + mmse(γ))`.
    pub fn phi_prime(&self, gamma: f64) -> Result<f64> {
        Self::check(gamma)?;
        Ok(0.5 * (self.sigma2 - self.delta / gamma + self.mmse(gamma)))
    }

    /// `φ''(γ) = ½(δ/γ² − E[Var(β₀|λ)²])`.
    pub fn phi_second(&self, gamma: f64) -> Result<f64> {
        Self::check(gamma)?;
        Ok(self.phi_second_from(&self.stats(gamma)))
    }

    /// `mmse(γ) − δ/γ + σ²`, zero exactly at the critical points of `φ`.
    pub fn fixed_point_residual(&self, gamma: f64) -> f64 {
        self.mmse(gamma) - self.delta / gamma + self.sigma2
    }

    /// `γ₁ = δ/(σ² + E β₀²)`.
    pub fn gamma_initial(&self) -> f64 {
        self.delta / (self.sigma2 + self.prior.second_moment())
    }

    /// One step of the recursion `γ ↦ δ/(σ² + mmse(γ))`.
    pub fn gamma_next(&self, gamma: f64) -> f64 {
        self.delta / (self.sigma2 + self.mmse(gamma))
    }

    /// `γ₁, …, γ_k`.
    pub fn gamma_sequence(&self, k: usize) -> Vec<f64> {
        let mut seq = Vec::with_capacity(k);
        let mut g = self.gamma_initial();
        for _ in 0..k {
            seq.push(g);
            g = self.gamma_next(g);
        }
        seq
    }

    /// Iterates the recursion until successive values agree to `tol` (relative).
    pub fn gamma_limit(&self, tol: f64, max_iter: usize) -> (f64, usize) {
        let mut g = self.gamma_initial();
        for it in 1..=max_iter {
            let next = self.gamma_next(g);
            if (next - g).abs() <= tol * next {
                return (next, it);
            }
            g = next;
        }
        (g, max_iter)
    }

    fn bisect_residual(&self, mut lo: f64, mut hi: f64) -> f64 {
        let mut r_lo = self.fixed_point_residual(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * hi {
                break;
            }
            let r = self.fixed_point_residual(mid);
            if (r < 0.0) == (r_lo < 0.0) {
                lo = mid;
                r_lo = r;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Locates `γ_stat`, `γ_alg` and the regime from a grid scan with
    /// bisection refinement of every descending-to-ascending crossing of `φ'`.
    pub fn solve_gammas(&self, grid: &GridSpec) -> Result<PotentialProfile> {
        if grid.points < 2 || !(grid.lo_factor > 0.0 && grid.hi_factor > grid.lo_factor) {
            return Err(TapError::Config("invalid gamma grid".into()));
        }
        let scale = self.delta / self.sigma2;
        let (lo, hi) = ((grid.lo_factor * scale).ln(), (grid.hi_factor * scale).ln());
        let n = grid.points;
        let gamma_grid: Vec<f64> = (0..n)
            .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
            .collect();
        let stats: Vec<ChannelStats> = gamma_grid.par_iter().map(|&g| self.stats(g)).collect();
        let phi: Vec<f64> = stats.iter().map(|s| self.phi_from(s)).collect();
        let phi_prime: Vec<f64> = stats.iter().map(|s| self.phi_prime_from(s)).collect();
        let phi_second: Vec<f64> = stats.iter().map(|s| self.phi_second_from(s)).collect();

        let mut minima = Vec::new();
        for i in 1..n {
            if phi_prime[i - 1] < 0.0 && phi_prime[i] >= 0.0 {
                minima.push(self.bisect_residual(gamma_grid[i - 1], gamma_grid[i]));
            }
        }
        if minima.is_empty() {
            return Err(TapError::NoBracket);
        }
        let gamma_alg = minima[0];
        let values: Vec<f64> = minima.iter().map(|&g| self.phi(g)).collect::<Result<_>>()?;
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..minima.len())
            .filter(|&i| values[i] - best <= TIE_TOL)
            .collect();
        let gamma_stat = minima[ties[0]];
        let curvature_at_stat = self.phi_second(gamma_stat)?;
        let regime = if ties.len() > 1 || curvature_at_stat <= DEGENERATE_CURVATURE {
            Regime::Degenerate
        } else if (gamma_alg - gamma_stat).abs() < EASY_REL_TOL * gamma_stat {
            Regime::Easy
        } else {
            Regime::Hard
        };
        Ok(PotentialProfile {
            gamma_grid,
            phi,
            phi_prime,
            phi_second,
            gamma_stat,
            gamma_alg,
            regime,
            curvature_at_stat,
            local_minima: minima,
        })
    }

    /// Upper-left `k × k` blocks of `K_g` and `K_h` along the recursion.
    pub fn se_covariances(&self, k: usize) -> SeCovariances {
        let gamma_seq = self.gamma_sequence(k);
        se_covariances_from(&gamma_seq, self.sigma2, self.delta)
    }
}

/// `K_g[i][j] = 1/γ_{max(i,j)}`, `K_h[i][j] = δ/γ_{max(i,j)} − σ²`.
pub fn se_covariances_from(gamma_seq: &[f64], sigma2: f64, delta: f64) -> SeCovariances {
    let k = gamma_seq.len();
    let k_g = DMatrix::from_fn(k, k, |i, j| 1.0 / gamma_seq[i.max(j)]);
    let k_h = DMatrix::from_fn(k, k, |i, j| delta / gamma_seq[i.max(j)] - sigma2);
    SeCovariances {
        k_g,
        k_h,
        gamma_seq: gamma_seq.to_vec(),
    }
}
