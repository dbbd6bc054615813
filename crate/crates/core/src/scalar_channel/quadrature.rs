//! Gauss–Hermite rules for expectations over a standard normal variable.
//!
//! Nodes are found by Newton iteration on the orthonormal Hermite recurrence,
//! which keeps the weights accurate in relative terms even far in the tails
//! (Golub–Welsch eigenvector weights lose that accuracy).

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapError};

/// Largest rule we build; beyond this the orthonormal recurrence overflows.
pub const MAX_NODES: usize = 180;

/// Default number of nodes for the Gaussian channel integral.
pub const DEFAULT_CHANNEL_NODES: usize = 101;

/// Default number of nodes used to discretize continuous prior components.
pub const DEFAULT_PRIOR_NODES: usize = 101;

/// Gauss–Hermite rule normalized so that `sum_i w_i f(z_i) ≈ E f(Z)`, `Z ~ N(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(TapError::Config(format!(
                "Gauss-Hermite node count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        let (x, w) = physicists_rule(n);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| (std::f64::consts::SQRT_2 * xi, wi / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(Z)` for `Z ~ N(0,1)`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Nodes and weights for the weight function `exp(-x^2)`.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    const EPS: f64 = 1e-15;
    const MAX_IT: usize = 100;

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_IT {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[half - 1] = 0.0;
    }
    (x, w)
}

/// Quadrature settings for channel expectations over `z ~ N(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    rule: GaussHermite,
}

impl QuadratureSpec {
    pub fn with_nodes(n: usize) -> Result<Self> {
        Ok(Self {
            rule: GaussHermite::new(n)?,
        })
    }

    pub fn rule(&self) -> &GaussHermite {
        &self.rule
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::with_nodes(DEFAULT_CHANNEL_NODES).expect("default node count is valid")
    }
}

/// Serializable form of a [`QuadratureSpec`], used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub channel_nodes: usize,
    pub prior_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            channel_nodes: DEFAULT_CHANNEL_NODES,
            prior_nodes: DEFAULT_PRIOR_NODES,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_exact() {
        for n in [1usize, 2, 5, 21, 61, 101, 180] {
            let gh = GaussHermite::new(n).unwrap();
            assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-13);
            if n >= 2 {
                assert!(gh.expect(|z| z).abs() < 1e-12);
                assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn smooth_integrand() {
        // E cos(Z) = exp(-1/2)
        let gh = GaussHermite::new(61).unwrap();
        assert!((gh.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn weights_positive_and_sorted() {
        let gh = GaussHermite::new(101).unwrap();
        assert!(gh.weights().iter().all(|&w| w > 0.0));
        assert!(gh.nodes().windows(2).all(|p| p[0] < p[1]));
        assert_eq!(gh.nodes()[50], 0.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(GaussHermite::new(0).is_err());
        assert!(GaussHermite::new(MAX_NODES + 1).is_err());
    }
}
