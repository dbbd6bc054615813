use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{LinearModel, VariationalState};
use crate::scalar_channel::{DualPair, Prior};

pub(crate) fn random_model(n: usize, p: usize, sigma2: f64, seed: u64) -> LinearModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (p as f64).sqrt();
    let x = DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let beta = DVector::from_fn(p, |_, _| [-1.0, 0.0, 1.0][rng.random_range(0..3)]);
    let noise = DVector::from_fn(n, |_, _| sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    let y = &x * beta + noise;
    LinearModel::new(x, y, sigma2).unwrap()
}

/// Interior state from moderate random natural parameters.
pub(crate) fn random_state(prior: &Prior, p: usize, seed: u64) -> VariationalState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let duals = (0..p)
        .map(|_| DualPair::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..3.0)))
        .collect();
    VariationalState::from_duals(prior, duals).unwrap()
}

pub(crate) fn split(v: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let p = v.len() / 2;
    (DVector::from_column_slice(&v[..p]), DVector::from_column_slice(&v[p..]))
}

pub(crate) fn join(m: &DVector<f64>, s: &DVector<f64>) -> Vec<f64> {
    m.iter().chain(s.iter()).copied().collect()
}
