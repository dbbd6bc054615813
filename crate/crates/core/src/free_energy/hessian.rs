//! Hessian of the TAP (or mean-field) free energy.
//!
//! With `c = n/p` the blocks are
//!
//! ```text
//! H_mm = XᵀX/σ² − (c/V) I − (2c/p) m mᵀ/V² + diag(A_mm)
//! H_ms =              (c/p) m 1ᵀ/V²       + diag(A_ms)
//! H_ss =           −(c/(2p)) 1 1ᵀ/V²      + diag(A_ss)
//! ```
//!
//! where each `A_j` is the inverse covariance of `(β, β²)` under the tilted
//! law of coordinate `j`. For the mean-field objective `V` is replaced by `σ²`
//! and the rank-one terms vanish.

use nalgebra::{DMatrix, DVector};

use super::energy::Objective;
use super::model::LinearModel;
use super::state::VariationalState;
use crate::error::{Result, TapError};
use crate::scalar_channel::{tilted_moments, Prior};

/// Largest `2p` for which a dense Hessian is formed.
pub const MAX_DENSE_DIM: usize = 8000;

/// Structured Hessian: per-coordinate 2×2 entropy blocks, a few scalars and a
/// borrowed design. Rank-one terms are never materialized by [`matvec`](Self::matvec).
#[derive(Debug, Clone)]
pub struct TapHessian<'a> {
    model: &'a LinearModel,
    m: DVector<f64>,
    /// `(A_mm, A_ms, A_ss)` for each coordinate.
    entropy_blocks: Vec<[f64; 3]>,
    /// coefficient of the identity in `H_mm`
    diag_shift: f64,
    /// coefficient of the rank-one terms, `c/(p V²)`; zero for mean field
    rank_one: f64,
}

/// Determinant of the covariance of `(β, β²)`; falls back to the
/// triangle-area expansion (no cancellation) when the direct formula has lost
/// all precision and the prior is small.
fn covariance_determinant(prior: &Prior, lambda: f64, gamma: f64, cov: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [_, c]] = cov;
    let det = a * c - b * b;
    if det > 1e-10 * a * c || prior.len() > 12 {
        return det;
    }
    let locs = prior.locations();
    let logw: Vec<f64> = locs
        .iter()
        .zip(prior.log_weights())
        .map(|(&x, &lw)| lw - 0.5 * gamma * x * x + lambda * x)
        .collect();
    let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = w.iter().sum();
    let pr: Vec<f64> = w.iter().map(|v| v / z).collect();
    let k = locs.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            for l in (j + 1)..k {
                let (u1, u2) = (locs[j] - locs[i], locs[j] * locs[j] - locs[i] * locs[i]);
                let (v1, v2) = (locs[l] - locs[i], locs[l] * locs[l] - locs[i] * locs[i]);
                let area = u1 * v2 - u2 * v1;
                acc += pr[i] * pr[j] * pr[l] * area * area;
            }
        }
    }
    acc
}

impl<'a> TapHessian<'a> {
    pub fn new(model: &'a LinearModel, prior: &Prior, state: &VariationalState, objective: Objective) -> Result<Self> {
        if model.p() != state.p() {
            return Err(TapError::Shape("model and state dimensions differ".into()));
        }
        let p = state.p() as f64;
        let ratio = model.delta_hat();
        let mut entropy_blocks = Vec::with_capacity(state.p());
        for d in state.duals() {
            let t = tilted_moments(prior, *d)?;
            let det = covariance_determinant(prior, d.lambda, d.gamma, t.cov_matrix);
            if !(det > 0.0 && det.is_finite()) {
                return Err(TapError::Domain(format!(
                    "singular tilted covariance at lambda={}, gamma={}",
                    d.lambda, d.gamma
                )));
            }
            let [[a, b], [_, c]] = t.cov_matrix;
            entropy_blocks.push([c / det, -b / det, a / det]);
        }
        let (diag_shift, rank_one) = match objective {
            Objective::Tap => {
                let v = state.v(model.sigma2());
                (ratio / v, ratio / (p * v * v))
            }
            Objective::Mf => (ratio / model.sigma2(), 0.0),
        };
        Ok(Self {
            model,
            m: state.m().clone(),
            entropy_blocks,
            diag_shift,
            rank_one,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.m.len()
    }

    /// `H v` for `v = (v_m, v_s)`.
    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let p = self.m.len();
        assert_eq!(v.len(), 2 * p, "matvec expects a 2p-vector");
        let vm = v.rows(0, p);
        let vs = v.rows(p, p);
        let sigma2 = self.model.sigma2();
        let xv = self.model.x() * vm;
        let data = self.model.x().tr_mul(&xv) / sigma2;
        let m_dot = self.m.dot(&vm);
        let one_dot = vs.sum();
        let mut out = DVector::zeros(2 * p);
        for j in 0..p {
            let [amm, ams, ass] = self.entropy_blocks[j];
            let mj = self.m[j];
            out[j] = data[j] - self.diag_shift * vm[j] - 2.0 * self.rank_one * mj * m_dot
                + self.rank_one * mj * one_dot
                + amm * vm[j]
                + ams * vs[j];
            out[p + j] = self.rank_one * m_dot - 0.5 * self.rank_one * one_dot + ams * vm[j] + ass * vs[j];
        }
        out
    }

    /// Dense `2p × 2p` matrix, ordered `(m, s)`.
    pub fn dense(&self) -> DMatrix<f64> {
        let p = self.m.len();
        let gram = self.model.x().tr_mul(self.model.x()) / self.model.sigma2();
        let mut h = DMatrix::zeros(2 * p, 2 * p);
        h.view_mut((0, 0), (p, p)).copy_from(&gram);
        let r = self.rank_one;
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] -= 2.0 * r * self.m[i] * self.m[j];
                h[(i, p + j)] = r * self.m[i];
                h[(p + j, i)] = r * self.m[i];
                h[(p + i, p + j)] = -0.5 * r;
            }
        }
        for j in 0..p {
            let [amm, ams, ass] = self.entropy_blocks[j];
            h[(j, j)] += amm - self.diag_shift;
            h[(j, p + j)] += ams;
            h[(p + j, j)] += ams;
            h[(p + j, p + j)] += ass;
        }
        h
    }

    /// Gershgorin-type upper bound on the spectral radius, using
    /// `|x_iᵀx_j| ≤ ‖x_i‖‖x_j‖` for the data block.
    pub fn spectral_bound(&self) -> f64 {
        let p = self.m.len();
        let sigma2 = self.model.sigma2();
        let col_norms: Vec<f64> = self.model.x().column_iter().map(|c| c.norm()).collect();
        let col_sum: f64 = col_norms.iter().sum();
        let abs_m_sum: f64 = self.m.iter().map(|v| v.abs()).sum();
        let r = self.rank_one;
        let mut bound: f64 = 0.0;
        for j in 0..p {
            let [amm, ams, ass] = self.entropy_blocks[j];
            let mj = self.m[j].abs();
            let row_m = col_norms[j] * col_sum / sigma2
                + self.diag_shift
                + 2.0 * r * mj * abs_m_sum
                + r * mj * p as f64
                + amm.abs()
                + ams.abs();
            let row_s = r * abs_m_sum + 0.5 * r * p as f64 + ams.abs() + ass.abs();
            bound = bound.max(row_m).max(row_s);
        }
        bound
    }
}

/// Dense Hessian of the TAP free energy.
pub fn tap_hessian_dense(model: &LinearModel, prior: &Prior, state: &VariationalState) -> Result<DMatrix<f64>> {
    if 2 * state.p() > MAX_DENSE_DIM {
        return Err(TapError::Domain(format!(
            "dense Hessian limited to dimension {MAX_DENSE_DIM}; use the matvec form"
        )));
    }
    Ok(TapHessian::new(model, prior, state, Objective::Tap)?.dense())
}

/// Hessian-vector product of the TAP free energy.
pub fn tap_hessian_matvec(
    model: &LinearModel,
    prior: &Prior,
    state: &VariationalState,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let h = TapHessian::new(model, prior, state, Objective::Tap)?;
    if v.len() != h.dim() {
        return Err(TapError::Shape(format!("expected a {}-vector", h.dim())));
    }
    Ok(h.matvec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_energy::dense_min_eigenvalue;
    use crate::free_energy::energy::evaluate;
    use crate::free_energy::test_support::{join, random_model, random_state, split};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gradient_at(model: &LinearModel, prior: &Prior, v: &[f64], obj: Objective) -> DVector<f64> {
        let (m, s) = split(v);
        let st = VariationalState::from_moments(prior, &m, &s).unwrap();
        let e = evaluate(model, &st, obj).unwrap();
        DVector::from_vec(join(&e.grad_m, &e.grad_s))
    }

    #[test]
    fn dense_is_symmetric_and_matches_matvec() {
        let model = random_model(45, 30, 0.3, 1);
        let prior = Prior::three_point();
        let st = random_state(&prior, 30, 2);
        let h = TapHessian::new(&model, &prior, &st, Objective::Tap).unwrap();
        let d = h.dense();
        assert!((&d - d.transpose()).amax() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let v = DVector::from_fn(60, |_, _| rng.random_range(-1.0..1.0));
            assert!((&d * &v - h.matvec(&v)).amax() < 1e-10);
        }
    }

    #[test]
    fn dense_matches_finite_difference_of_gradient() {
        let model = random_model(15, 10, 0.5, 4);
        let prior = Prior::three_point();
        for obj in [Objective::Tap, Objective::Mf] {
            for seed in 0..5 {
                let st = random_state(&prior, 10, 10 + seed);
                let dense = TapHessian::new(&model, &prior, &st, obj).unwrap().dense();
                let point = join(st.m(), st.s());
                let h = 1e-5;
                for i in 0..20 {
                    let mut up = point.clone();
                    let mut dn = point.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let col = (gradient_at(&model, &prior, &up, obj) - gradient_at(&model, &prior, &dn, obj)) / (2.0 * h);
                    for k in 0..20 {
                        let an = dense[(k, i)];
                        assert!((col[k] - an).abs() / (1.0 + an.abs()) < 1e-4, "{obj:?} ({k},{i}): {} vs {an}", col[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn convex_at_low_signal_to_noise() {
        let model = random_model(50, 50, 100.0, 5);
        let prior = Prior::three_point();
        for seed in 0..5 {
            let st = random_state(&prior, 50, 20 + seed);
            let h = tap_hessian_dense(&model, &prior, &st).unwrap();
            assert!(dense_min_eigenvalue(h) > 0.0);
        }
    }

    #[test]
    fn dense_guard_and_matvec_shape() {
        let model = random_model(10, 5, 1.0, 6);
        let prior = Prior::three_point();
        let st = random_state(&prior, 5, 7);
        assert!(tap_hessian_matvec(&model, &prior, &st, &DVector::zeros(9)).is_err());
        assert_eq!(tap_hessian_matvec(&model, &prior, &st, &DVector::zeros(10)).unwrap().len(), 10);
    }

    #[test]
    fn spectral_bound_dominates() {
        let model = random_model(30, 20, 0.3, 8);
        let prior = Prior::three_point();
        let st = random_state(&prior, 20, 9);
        let h = TapHessian::new(&model, &prior, &st, Objective::Tap).unwrap();
        let eig = nalgebra::SymmetricEigen::new(h.dense()).eigenvalues;
        assert!(eig.iter().all(|e| e.abs() <= h.spectral_bound()));
    }
}
