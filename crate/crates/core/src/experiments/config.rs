use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::Design;
use crate::error::{Result, TapError};
use crate::free_energy::EigenMethod;
use crate::ngd::NgdConfig;
use crate::scalar_channel::{PriorSpec, QuadratureSpec, DEFAULT_CHANNEL_NODES, DEFAULT_PRIOR_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Tap,
    Mf,
    Amp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Tap => "TAP",
            Method::Mf => "MF",
            Method::Amp => "AMP",
        })
    }
}

impl FromStr for Method {
    type Err = TapError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TAP" => Ok(Method::Tap),
            "MF" => Ok(Method::Mf),
            "AMP" => Ok(Method::Amp),
            other => Err(TapError::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Settings shared by every experiment. Read from a TOML key-value file;
/// absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub prior: String,
    pub sigma: f64,
    pub n: usize,
    /// Aspect ratios; each gives `p = ⌊n/δ⌋`. Ignored when `p` is set.
    pub delta_grid: Vec<f64>,
    pub p: Option<usize>,
    pub design: Design,
    /// Scenarios visited by the universality run.
    pub scenarios: Vec<Design>,
    pub replicates: usize,
    pub seed: u64,
    pub methods: BTreeSet<Method>,
    pub output_dir: PathBuf,
    /// AMP iterations used to initialize NGD; zero starts from the null state.
    pub amp_warm_start: usize,
    pub eta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub backtracking: bool,
    pub prior_nodes: usize,
    pub channel_nodes: usize,
    pub eigen_method: EigenMethod,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ngd = NgdConfig::default();
        Self {
            prior: "three-point".into(),
            sigma: 0.3,
            n: 300,
            delta_grid: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            p: None,
            design: Design::Gaussian,
            scenarios: Design::ALL.to_vec(),
            replicates: 20,
            seed: 0,
            methods: [Method::Tap, Method::Mf].into_iter().collect(),
            output_dir: PathBuf::from("out"),
            amp_warm_start: 8,
            eta: ngd.eta,
            max_iters: ngd.max_iters,
            grad_tol: ngd.grad_tol,
            backtracking: ngd.backtracking,
            prior_nodes: DEFAULT_PRIOR_NODES,
            channel_nodes: DEFAULT_CHANNEL_NODES,
            eigen_method: EigenMethod::Dense,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TapError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TapError::Config(msg));
        self.prior_spec()?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        match self.p {
            Some(0) => return bad("p must be positive".into()),
            Some(_) => {}
            None => {
                if self.delta_grid.is_empty() {
                    return bad("delta_grid is empty and p is unset".into());
                }
                for &d in &self.delta_grid {
                    if !(d > 0.0 && d.is_finite()) || p_for_delta(self.n, d) == 0 {
                        return bad(format!("invalid delta {d}"));
                    }
                }
            }
        }
        if self.methods.is_empty() {
            return bad("method set is empty".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive".into());
        }
        QuadratureSpec::with_nodes(self.channel_nodes)?;
        Ok(())
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        self.prior.parse()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn quadrature(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::with_nodes(self.channel_nodes)
    }

    pub fn ngd_config(&self) -> NgdConfig {
        NgdConfig {
            eta: self.eta,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            backtracking: self.backtracking,
            ..NgdConfig::default()
        }
    }

    /// `(δ, p)` pairs visited by a sweep.
    pub fn dimensions(&self) -> Vec<(f64, usize)> {
        match self.p {
            Some(p) => vec![(self.n as f64 / p as f64, p)],
            None => self
                .delta_grid
                .iter()
                .map(|&d| (d, p_for_delta(self.n, d)))
                .collect(),
        }
    }

    pub fn wants(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

/// `⌊n/δ⌋`, tolerant of ratios such as `300/0.6` landing just below an integer.
pub fn p_for_delta(n: usize, delta: f64) -> usize {
    (n as f64 / delta * (1.0 + 1e-12)).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_key_value_text() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            prior = "bernoulli-gaussian:0.5,1"
            sigma = 0.3
            n = 500
            delta_grid = [1.0]
            design = "rademacher_noise"
            replicates = 10
            seed = 42
            methods = ["TAP", "MF"]
            output_dir = "results"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.n, 500);
        assert_eq!(cfg.design, Design::RademacherNoise);
        assert_eq!(cfg.dimensions(), vec![(1.0, 500)]);
        assert!(cfg.wants(Method::Mf) && !cfg.wants(Method::Amp));
    }

    #[test]
    fn p_floor_of_ratio() {
        let cfg = ExperimentConfig {
            delta_grid: vec![1.4],
            ..Default::default()
        };
        assert_eq!(cfg.dimensions(), vec![(1.4, 214)]);
        assert_eq!(p_for_delta(300, 0.6), 500);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml_str("replicates = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("sigma = -1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("prior = \"nonsense\"").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown_key = 3").is_err());
    }
}
