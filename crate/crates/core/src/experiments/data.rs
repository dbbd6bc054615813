use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::rng::{replicate_seed, stream, Stream};
use crate::error::{Result, TapError};
use crate::free_energy::LinearModel;
use crate::scalar_channel::PriorSpec;

/// Design and noise scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `x_ij ~ N(0, 1/p)`, Gaussian noise
    Gaussian,
    /// `x_ij ~ Unif{±1/√p}`, Gaussian noise
    Rademacher,
    /// Gaussian design, `ε_i ~ Unif{±σ}`
    RademacherNoise,
    /// Column `j` Bernoulli with rate `0.1 + 0.8 j/(p−1)`, standardized to
    /// mean 0 and variance `1/p`; Gaussian noise
    BernoulliHetero,
}

impl Design {
    pub const ALL: [Design; 4] = [
        Design::Gaussian,
        Design::Rademacher,
        Design::RademacherNoise,
        Design::BernoulliHetero,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Design::Gaussian => "gaussian",
            Design::Rademacher => "rademacher",
            Design::RademacherNoise => "rademacher_noise",
            Design::BernoulliHetero => "bernoulli_hetero",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = TapError;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.name() == s.trim().replace('-', "_"))
            .ok_or_else(|| TapError::Config(format!("unknown design `{s}`")))
    }
}

/// One simulated regression problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: LinearModel,
    pub truth: DVector<f64>,
    pub seed: u64,
    pub replicate: usize,
    pub design: Design,
}

fn bernoulli_column<R: Rng>(rng: &mut R, n: usize, rate: f64, p: usize) -> Vec<f64> {
    loop {
        let col: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rate { 1.0 } else { 0.0 }).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            let scale = 1.0 / (var * p as f64).sqrt();
            return col.into_iter().map(|v| (v - mean) * scale).collect();
        }
    }
}

/// Draws `(X, β₀, ε)` for a given replicate seed. Each of the three pieces
/// uses its own stream, so scenarios sharing a design share it exactly.
pub fn instance_from_seed(
    prior: &PriorSpec,
    design: Design,
    n: usize,
    p: usize,
    sigma: f64,
    seed: u64,
) -> Result<(LinearModel, DVector<f64>)> {
    if n == 0 || p == 0 {
        return Err(TapError::Shape("n and p must be positive".into()));
    }
    let mut rd = stream(seed, Stream::Design);
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();
    let x = match design {
        Design::Gaussian | Design::RademacherNoise => {
            DMatrix::from_fn(n, p, |_, _| inv_sqrt_p * rd.sample::<f64, _>(StandardNormal))
        }
        Design::Rademacher => DMatrix::from_fn(n, p, |_, _| if rd.random::<bool>() { inv_sqrt_p } else { -inv_sqrt_p }),
        Design::BernoulliHetero => {
            let cols: Vec<DVector<f64>> = (0..p)
                .map(|j| {
                    let rate = if p == 1 { 0.5 } else { 0.1 + 0.8 * j as f64 / (p - 1) as f64 };
                    DVector::from_vec(bernoulli_column(&mut rd, n, rate, p))
                })
                .collect();
            DMatrix::from_columns(&cols)
        }
    };
    let mut rb = stream(seed, Stream::Beta);
    let truth = DVector::from_fn(p, |_, _| prior.sample(&mut rb));
    let mut rn = stream(seed, Stream::Noise);
    let noise = match design {
        Design::RademacherNoise => DVector::from_fn(n, |_, _| if rn.random::<bool>() { sigma } else { -sigma }),
        _ => DVector::from_fn(n, |_, _| sigma * rn.sample::<f64, _>(StandardNormal)),
    };
    let y = &x * &truth + noise;
    Ok((LinearModel::new(x, y, sigma * sigma)?, truth))
}

/// Instance for `replicate` at dimension `p` under `cfg.design`.
pub fn generate_instance(cfg: &ExperimentConfig, p: usize, replicate: usize) -> Result<Instance> {
    generate_instance_with(cfg, cfg.design, p, replicate)
}

pub fn generate_instance_with(cfg: &ExperimentConfig, design: Design, p: usize, replicate: usize) -> Result<Instance> {
    let seed = replicate_seed(cfg.seed, replicate, p);
    let (model, truth) = instance_from_seed(&cfg.prior_spec()?, design, cfg.n, p, cfg.sigma, seed)?;
    Ok(Instance {
        model,
        truth,
        seed,
        replicate,
        design,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn cfg(design: Design) -> ExperimentConfig {
        ExperimentConfig {
            n: 120,
            design,
            ..Default::default()
        }
    }

    #[test]
    fn design_names_roundtrip() {
        for d in Design::ALL {
            assert_eq!(d.to_string().parse::<Design>().unwrap(), d);
        }
    }

    #[test]
    fn bernoulli_columns_standardized() {
        let inst = generate_instance(&cfg(Design::BernoulliHetero), 60, 0).unwrap();
        let p = 60.0;
        for col in inst.model.x().column_iter() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0 / p).abs() < 1e-12);
        }
    }

    #[test]
    fn rademacher_entries_and_noise() {
        let inst = generate_instance(&cfg(Design::Rademacher), 50, 1).unwrap();
        assert!(inst.model.x().iter().all(|v| (v.abs() - 1.0 / 50f64.sqrt()).abs() < 1e-15));
        let c = cfg(Design::RademacherNoise);
        let inst = generate_instance(&c, 50, 1).unwrap();
        let resid = inst.model.y() - inst.model.x() * &inst.truth;
        assert!(resid.iter().all(|e| (e.abs() - c.sigma).abs() < 1e-12));
    }

    #[test]
    fn deterministic_and_shared_design() {
        let a = generate_instance(&cfg(Design::Gaussian), 40, 2).unwrap();
        let b = generate_instance(&cfg(Design::Gaussian), 40, 2).unwrap();
        assert_eq!(a.model.x(), b.model.x());
        assert_eq!(a.model.y(), b.model.y());
        let c = generate_instance(&cfg(Design::RademacherNoise), 40, 2).unwrap();
        assert_eq!(a.model.x(), c.model.x());
        assert_eq!(a.truth, c.truth);
    }

    #[test]
    fn gaussian_operator_norm_near_edge() {
        let c = ExperimentConfig {
            n: 500,
            ..Default::default()
        };
        let inst = generate_instance(&c, 500, 0).unwrap();
        let x = inst.model.x();
        let top = SymmetricEigen::new(x.tr_mul(x)).eigenvalues.max().sqrt();
        let edge = 1.0 + 1.0f64.sqrt();
        assert!(top > 0.9 * edge && top < 1.1 * edge, "{top}");
    }
}
