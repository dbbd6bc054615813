//! Versioned CSV tables and the JSON run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use super::calibration::CalibrationTable;
use super::sweep::{MseRow, UniversalityRow};
use crate::amp::AmpRecord;
use crate::error::{Result, TapError};
use crate::ngd::NgdRecord;
use crate::rs_potential::PotentialProfile;

/// First line of every CSV file.
pub const CSV_VERSION_LINE: &str = "# tap-lab v1";

fn csv_err(e: csv::Error) -> TapError {
    TapError::Io(e.to_string())
}

/// Writes the version line, the header and the rows.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_csv(BufWriter::new(File::create(path)?), header, rows)
}

fn f(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, f)
}

pub const POTENTIAL_HEADER: [&str; 4] = ["gamma", "phi", "phi_prime", "phi_second"];

pub fn potential_rows(profile: &PotentialProfile) -> Vec<Vec<String>> {
    (0..profile.gamma_grid.len())
        .map(|i| {
            vec![
                f(profile.gamma_grid[i]),
                f(profile.phi[i]),
                f(profile.phi_prime[i]),
                f(profile.phi_second[i]),
            ]
        })
        .collect()
}

pub const AMP_HEADER: [&str; 5] = ["k", "gamma_k", "mse_empirical", "mse_se", "grad_norm_sq_per_p"];

pub fn amp_rows(history: &[AmpRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                f(r.gamma),
                opt(r.mse_empirical),
                f(r.mse_se),
                opt(r.grad_norm_sq_per_p),
            ]
        })
        .collect()
}

pub const NGD_HEADER: [&str; 4] = ["k", "f_value", "grad_norm_sq_per_p", "step"];

pub fn ngd_rows(records: &[NgdRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| vec![r.k.to_string(), f(r.f_value), f(r.grad_norm_sq_per_p), f(r.step)])
        .collect()
}

pub const MSE_HEADER: [&str; 11] = [
    "delta",
    "seed",
    "replicate",
    "p",
    "mse_tap",
    "mse_mf",
    "mse_amp",
    "tap_converged",
    "mf_converged",
    "tap_iters",
    "mf_iters",
];

pub fn mse_rows(rows: &[MseRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                f(r.delta),
                r.seed.to_string(),
                r.replicate.to_string(),
                r.p.to_string(),
                f(r.mse_tap),
                f(r.mse_mf),
                f(r.mse_amp),
                r.tap_converged.to_string(),
                r.mf_converged.to_string(),
                r.tap_iters.to_string(),
                r.mf_iters.to_string(),
            ]
        })
        .collect()
}

pub const CALIBRATION_HEADER: [&str; 6] = ["method", "bin_lo", "bin_hi", "pip_mean", "freq_nonzero", "count"];

pub fn calibration_rows(method: &str, table: &CalibrationTable) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|r| {
            vec![
                method.to_string(),
                f(r.bin_lo),
                f(r.bin_hi),
                f(r.pip_mean),
                f(r.freq_nonzero),
                r.count.to_string(),
            ]
        })
        .collect()
}

pub const UNIVERSALITY_HEADER: [&str; 10] = [
    "scenario",
    "delta",
    "seed",
    "replicate",
    "p",
    "mse_tap",
    "mse_mf",
    "min_eig",
    "tap_converged",
    "mf_converged",
];

pub fn universality_rows(rows: &[UniversalityRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.scenario.to_string(),
                f(r.delta),
                r.seed.to_string(),
                r.replicate.to_string(),
                r.p.to_string(),
                f(r.mse_tap),
                f(r.mse_mf),
                f(r.min_eig),
                r.tap_converged.to_string(),
                r.mf_converged.to_string(),
            ]
        })
        .collect()
}

/// `{config, git_describe, wall_time_secs, ...}` written next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub git_describe: Option<String>,
    pub wall_time_secs: f64,
    pub outputs: Vec<PathBuf>,
}

/// `git describe --always --dirty` of the working directory, if available.
pub fn git_describe() -> Option<String> {
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!s.is_empty()).then_some(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| TapError::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
