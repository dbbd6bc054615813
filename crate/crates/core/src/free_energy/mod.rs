//! TAP and naive mean-field free energies over `(m, s) ∈ Γᵖ`.

mod eigen;
mod energy;
mod hessian;
mod model;
mod state;

pub use eigen::{
    dense_min_eigenvalue, lanczos_min_eigenvalue, min_eigenvalue, EigenMethod, LanczosConfig, MinEigen,
};
pub use energy::{
    energy, evaluate, mf_energy, mf_energy_exact, mf_gradient, onsager_correction, tap_energy,
    tap_gradient, Evaluation, Objective,
};
pub use hessian::{tap_hessian_dense, tap_hessian_matvec, TapHessian, MAX_DENSE_DIM};
pub use model::LinearModel;
pub use state::{StateSnapshot, VariationalState};

pub(crate) use energy::gradient_with_residual;

#[cfg(test)]
pub(crate) mod test_support;
