//! Simulated instances, the MSE / calibration / universality experiments and
//! their CSV output.

mod calibration;
mod config;
mod data;
pub mod output;
mod rng;
mod sweep;

pub use calibration::{
    pip_pairs, run_calibration, CalibrationResult, CalibrationRow, CalibrationTable, CALIBRATION_BINS,
};
pub use config::{p_for_delta, ExperimentConfig, Method};
pub use data::{generate_instance, generate_instance_with, instance_from_seed, Design, Instance};
pub use rng::{replicate_seed, stream, Stream};
pub use sweep::{
    fit_instance, run_mse_sweep, run_universality, summarize_mse, Fit, MseRow, MseSummary, UniversalityRow,
};
