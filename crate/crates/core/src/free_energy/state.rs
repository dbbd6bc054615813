use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Result, TapError};
use crate::scalar_channel::{
    dual_solve, gamma_region, project_interior, tilted_first_two, DualPair, GammaRegion,
    MomentPair, Prior,
};
use crate::util::CompensatedSum;

/// Per-coordinate moments `(m_j, s_j) ∈ Γ` with their natural parameters.
///
/// Every constructor fills the dual cache, so `tilted_moments(duals[j])`
/// reproduces `(m[j], s[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    m: DVector<f64>,
    s: DVector<f64>,
    duals: Vec<DualPair>,
    log_partition: Vec<f64>,
    projections: usize,
}

impl VariationalState {
    /// Moments of the tilted laws at the given natural parameters.
    pub fn from_duals(prior: &Prior, duals: Vec<DualPair>) -> Result<Self> {
        let p = duals.len();
        let mut m = DVector::zeros(p);
        let mut s = DVector::zeros(p);
        let mut log_partition = Vec::with_capacity(p);
        for (j, d) in duals.iter().enumerate() {
            if !d.is_finite() {
                return Err(TapError::DegenerateTilt {
                    lambda: d.lambda,
                    gamma: d.gamma,
                });
            }
            let (mj, sj, lz) = tilted_first_two(prior, d.lambda, d.gamma);
            m[j] = mj;
            s[j] = sj;
            log_partition.push(lz);
        }
        Ok(Self {
            m,
            s,
            duals,
            log_partition,
            projections: 0,
        })
    }

    /// Solves the dual map for every coordinate. Fails unless all pairs are
    /// interior to Γ.
    pub fn from_moments(prior: &Prior, m: &DVector<f64>, s: &DVector<f64>) -> Result<Self> {
        Self::from_moments_inner(prior, m, s, false)
    }

    /// Like [`from_moments`](Self::from_moments) but nudges boundary pairs
    /// inside Γ first; exterior pairs are still rejected.
    pub fn from_moments_projected(prior: &Prior, m: &DVector<f64>, s: &DVector<f64>) -> Result<Self> {
        Self::from_moments_inner(prior, m, s, true)
    }

    fn from_moments_inner(prior: &Prior, m: &DVector<f64>, s: &DVector<f64>, project: bool) -> Result<Self> {
        if m.len() != s.len() {
            return Err(TapError::Shape("m and s lengths differ".into()));
        }
        let mut duals = Vec::with_capacity(m.len());
        let mut projections = 0;
        let mut prev: Option<DualPair> = None;
        for j in 0..m.len() {
            let mut mp = MomentPair::new(m[j], s[j]);
            match gamma_region(prior, mp) {
                GammaRegion::Interior => {}
                GammaRegion::Boundary if project => {
                    mp = project_interior(prior, mp);
                    projections += 1;
                }
                _ => return Err(TapError::NotInDomain { m: mp.m, s: mp.s }),
            }
            let d = match dual_solve(prior, mp, None) {
                Ok(d) => d,
                // a warm start from the previous coordinate occasionally rescues
                // pairs very close to the boundary
                Err(TapError::NoConvergence { .. }) if prev.is_some() => dual_solve(prior, mp, prev)?,
                Err(e) => return Err(e),
            };
            prev = Some(d);
            duals.push(d);
        }
        let mut state = Self::from_duals(prior, duals)?;
        state.projections = projections;
        Ok(state)
    }

    /// All coordinates at the untilted prior: `m_j = E β₀`, `s_j = E β₀²`.
    pub fn null_state(prior: &Prior, p: usize) -> Self {
        Self::from_duals(prior, vec![DualPair::default(); p]).expect("zero tilt is finite")
    }

    pub fn m(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn duals(&self) -> &[DualPair] {
        &self.duals
    }

    pub fn log_partition(&self) -> &[f64] {
        &self.log_partition
    }

    pub fn p(&self) -> usize {
        self.m.len()
    }

    /// Number of boundary projections applied when this state was built.
    pub fn projections(&self) -> usize {
        self.projections
    }

    /// `S(s) = mean(s)`.
    pub fn mean_s(&self) -> f64 {
        self.s.mean()
    }

    /// `Q(m) = mean(m²)`.
    pub fn mean_m_sq(&self) -> f64 {
        self.m.norm_squared() / self.p() as f64
    }

    /// `S(s) − Q(m)`, the average marginal variance.
    pub fn mean_variance(&self) -> f64 {
        let p = self.p() as f64;
        self.m
            .iter()
            .zip(self.s.iter())
            .map(|(&m, &s)| s - m * m)
            .sum::<f64>()
            / p
    }

    /// `V = σ² + S(s) − Q(m)`.
    pub fn v(&self, sigma2: f64) -> f64 {
        sigma2 + self.mean_variance()
    }

    /// `D₀(m, s) = Σ_j −h(m_j, s_j)`, compensated.
    pub fn relative_entropy(&self) -> f64 {
        let acc: CompensatedSum = (0..self.p())
            .map(|j| {
                let d = self.duals[j];
                (d.lambda * self.m[j] - 0.5 * d.gamma * self.s[j] - self.log_partition[j]).max(0.0)
            })
            .collect();
        acc.value()
    }

    /// Serializable snapshot.
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            m: self.m.iter().copied().collect(),
            s: self.s.iter().copied().collect(),
            lambda: self.duals.iter().map(|d| d.lambda).collect(),
            gamma: self.duals.iter().map(|d| d.gamma).collect(),
        }
    }
}

/// JSON shape of a final state: `{m, s, lambda, gamma}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSnapshot {
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_state_moments() {
        let p = Prior::three_point();
        let st = VariationalState::null_state(&p, 4);
        assert!(st.m().iter().all(|&v| v.abs() < 1e-15));
        assert!(st.s().iter().all(|&v| (v - 2.0 / 3.0).abs() < 1e-15));
        assert!(st.relative_entropy().abs() < 1e-15);
        assert!((st.v(0.09) - (0.09 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn moments_roundtrip_through_duals() {
        let p = Prior::three_point();
        let m = DVector::from_vec(vec![0.1, -0.4, 0.7]);
        let s = DVector::from_vec(vec![0.5, 0.6, 0.8]);
        let st = VariationalState::from_moments(&p, &m, &s).unwrap();
        assert!((st.m() - &m).amax() < 1e-9);
        assert!((st.s() - &s).amax() < 1e-9);
    }

    #[test]
    fn boundary_handling() {
        let p = Prior::three_point();
        let m = DVector::from_vec(vec![0.5, 0.0]);
        let s = DVector::from_vec(vec![1.0, 0.5]);
        assert!(VariationalState::from_moments(&p, &m, &s).is_err());
        let st = VariationalState::from_moments_projected(&p, &m, &s).unwrap();
        assert_eq!(st.projections(), 1);
        let outside = DVector::from_vec(vec![1.5, 0.0]);
        assert!(VariationalState::from_moments_projected(&p, &outside, &s).is_err());
    }
}
