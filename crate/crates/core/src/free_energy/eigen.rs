//! Smallest eigenvalue of the free-energy Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::energy::Objective;
use super::hessian::{TapHessian, MAX_DENSE_DIM};
use super::model::LinearModel;
use super::state::VariationalState;
use crate::error::{Result, TapError};
use crate::scalar_channel::Prior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinEigen {
    pub min_eig: f64,
    pub method: EigenMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// Lanczos settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosConfig {
    pub max_iters: usize,
    /// Ritz residual tolerance, absolute.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            max_iters: 600,
            tol: 1e-9,
            seed: 0x5eed,
        }
    }
}

/// Smallest eigenvalue of `∇²F_TAP` at `state`.
pub fn min_eigenvalue(
    model: &LinearModel,
    prior: &Prior,
    state: &VariationalState,
    method: EigenMethod,
) -> Result<MinEigen> {
    let h = TapHessian::new(model, prior, state, Objective::Tap)?;
    match method {
        EigenMethod::Dense => {
            if h.dim() > MAX_DENSE_DIM {
                return Err(TapError::Domain("dense eigensolve too large; use lanczos".into()));
            }
            let min_eig = dense_min_eigenvalue(h.dense());
            Ok(MinEigen {
                min_eig,
                method,
                iterations: 1,
                converged: true,
            })
        }
        EigenMethod::Lanczos => Ok(lanczos_min_eigenvalue(&h, &LanczosConfig::default())),
    }
}

pub fn dense_min_eigenvalue(h: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Plain Lanczos with full reorthogonalization on `cI − H`, where `c` is a
/// Gershgorin bound, so the wanted eigenvalue becomes the largest one.
/// On non-convergence the current Ritz estimate is returned with
/// `converged = false`.
pub fn lanczos_min_eigenvalue(h: &TapHessian<'_>, cfg: &LanczosConfig) -> MinEigen {
    let dim = h.dim();
    let shift = h.spectral_bound();
    let apply = |v: &DVector<f64>| -> DVector<f64> { v * shift - h.matvec(v) };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let max_iters = cfg.max_iters.min(dim);
    let mut estimate = f64::NAN;

    for it in 1..=max_iters {
        let qk = basis.last().expect("nonempty basis").clone();
        let mut w = apply(&qk);
        let alpha = qk.dot(&w);
        alphas.push(alpha);
        // two passes of classical Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let beta = w.norm();

        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, top) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        estimate = shift - top;
        let ritz_residual = (beta * eig.eigenvectors[(k - 1, idx)]).abs();
        if ritz_residual < cfg.tol || beta <= 1e-14 * shift || it == dim {
            return MinEigen {
                min_eig: estimate,
                method: EigenMethod::Lanczos,
                iterations: it,
                converged: true,
            };
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    MinEigen {
        min_eig: estimate,
        method: EigenMethod::Lanczos,
        iterations: max_iters,
        converged: false,
    }
}
