//! Mean-field and TAP variational approximations for linear models with atomic priors.
//!
//! The crate is organized bottom-up:
//!
//! * [`scalar_channel`]: tilted exponential family on an atomic prior, the
//!   moment/dual maps, relative entropy and the scalar Gaussian channel.
//! * [`rs_potential`]: the replica-symmetric potential, its stationary points
//!   and state-evolution covariances.
//! * [`free_energy`]: TAP and naive mean-field free energies with gradients,
//!   Hessians and minimum-eigenvalue probes.
//! * [`amp`]: Bayes AMP with Onsager correction and state-evolution diagnostics.
//! * [`ngd`]: natural gradient (mirror) descent on the free energies.
//! * [`oracle`]: exact references (Gaussian closed forms, enumeration,
//!   finite-difference checking).
//! * [`experiments`]: instance generation, sweeps, calibration and CSV output.

pub mod amp;
pub mod error;
pub mod experiments;
pub mod free_energy;
pub mod ngd;
pub mod oracle;
pub mod rs_potential;
pub mod scalar_channel;
mod util;

pub use error::{Result, TapError};
