//! Atomic priors and the text descriptors used to build them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::quadrature::{GaussHermite, DEFAULT_PRIOR_NODES};
use crate::error::{Result, TapError};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    ExplicitDiscrete,
    QuadratureOfContinuous,
}

/// A finite atomic measure on the real line.
///
/// Locations are sorted and distinct, weights are strictly positive and sum to
/// one. When the prior has a genuine point mass at zero (spike-and-slab style
/// priors), `zero_atom` records which atom carries it and what fraction of that
/// atom's weight is the point mass; the rest belongs to a discretized slab.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    locations: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    kind: PriorKind,
    descriptor: String,
    zero_atom: Option<(usize, f64)>,
}

impl Prior {
    /// Builds a prior from `(location, weight)` pairs.
    ///
    /// Duplicated locations are merged. Weights must be positive and sum to
    /// one within `1e-12`.
    pub fn new(atoms: &[(f64, f64)], kind: PriorKind, descriptor: impl Into<String>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.to_vec();
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() {
                return Err(TapError::InvalidPrior("non-finite atom".into()));
            }
            if w <= 0.0 {
                return Err(TapError::InvalidPrior(format!("non-positive weight {w} at {x}")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        if merged.len() < 3 {
            return Err(TapError::InvalidPrior(format!(
                "need at least three distinct support points, got {}",
                merged.len()
            )));
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(TapError::InvalidPrior(format!("weights sum to {total}, not 1")));
        }
        let locations: Vec<f64> = merged.iter().map(|a| a.0).collect();
        let weights: Vec<f64> = merged.iter().map(|a| a.1).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let zero_atom = if kind == PriorKind::ExplicitDiscrete {
            locations.iter().position(|&x| x == 0.0).map(|i| (i, 1.0))
        } else {
            None
        };
        Ok(Self {
            locations,
            weights,
            log_weights,
            kind,
            descriptor: descriptor.into(),
            zero_atom,
        })
    }

    /// Uniform prior on `{-1, 0, 1}`.
    pub fn three_point() -> Self {
        let w = 1.0 / 3.0;
        Self::new(&[(-1.0, w), (0.0, w), (1.0, w)], PriorKind::ExplicitDiscrete, "three-point")
            .expect("three-point prior is valid")
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Lower end of the support.
    pub fn support_min(&self) -> f64 {
        self.locations[0]
    }

    /// Upper end of the support.
    pub fn support_max(&self) -> f64 {
        self.locations[self.locations.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|x| x * x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Index of the atom holding a point mass at zero, with the fraction of its
    /// weight that is the point mass.
    pub fn zero_atom(&self) -> Option<(usize, f64)> {
        self.zero_atom
    }

    /// Nearest support points below and above `m`: `(a(m), b(m))`.
    pub fn bracket(&self, m: f64) -> (f64, f64) {
        let locs = &self.locations;
        let idx = locs.partition_point(|&x| x < m);
        if idx < locs.len() && locs[idx] == m {
            return (m, m);
        }
        let lo = if idx == 0 { locs[0] } else { locs[idx - 1] };
        let hi = if idx == locs.len() { locs[locs.len() - 1] } else { locs[idx] };
        (lo, hi)
    }
}

/// Parsed prior descriptor.
///
/// Text forms: `three-point`, `point-mass:v1,w1;v2,w2;...`,
/// `bernoulli-gaussian:<sparsity>,<variance>` and `gaussian:<variance>`.
/// Angle brackets around the argument list are accepted and ignored.
/// `sparsity` is the probability of the Gaussian (non-zero) component.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    ThreePoint,
    PointMass(Vec<(f64, f64)>),
    BernoulliGaussian { sparsity: f64, variance: f64 },
    Gaussian { variance: f64 },
}

impl PriorSpec {
    /// Atomic representation; continuous parts use `nodes` Gauss–Hermite atoms.
    pub fn to_prior_with_nodes(&self, nodes: usize) -> Result<Prior> {
        let desc = self.to_string();
        match self {
            PriorSpec::ThreePoint => Ok(Prior::three_point()),
            PriorSpec::PointMass(atoms) => Prior::new(atoms, PriorKind::ExplicitDiscrete, desc),
            PriorSpec::Gaussian { variance } => {
                let gh = GaussHermite::new(nodes)?;
                let sd = variance.sqrt();
                let atoms: Vec<(f64, f64)> = gh
                    .nodes()
                    .iter()
                    .zip(gh.weights())
                    .map(|(&z, &w)| (sd * z, w))
                    .collect();
                let atoms = renormalize(atoms);
                Prior::new(&atoms, PriorKind::QuadratureOfContinuous, desc)
            }
            PriorSpec::BernoulliGaussian { sparsity, variance } => {
                let gh = GaussHermite::new(nodes)?;
                let sd = variance.sqrt();
                let mut atoms: Vec<(f64, f64)> = gh
                    .nodes()
                    .iter()
                    .zip(gh.weights())
                    .map(|(&z, &w)| (sd * z, sparsity * w))
                    .collect();
                let spike = 1.0 - sparsity;
                let slab_at_zero: f64 = atoms.iter().filter(|a| a.0 == 0.0).map(|a| a.1).sum();
                atoms.push((0.0, spike));
                let atoms = renormalize(atoms);
                let mut prior = Prior::new(&atoms, PriorKind::QuadratureOfContinuous, desc)?;
                let idx = prior.locations.iter().position(|&x| x == 0.0).expect("zero atom present");
                prior.zero_atom = Some((idx, spike / (spike + slab_at_zero)));
                Ok(prior)
            }
        }
    }

    pub fn to_prior(&self) -> Result<Prior> {
        self.to_prior_with_nodes(DEFAULT_PRIOR_NODES)
    }

    /// Draws one coefficient from the (continuous, undiscretized) prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PriorSpec::ThreePoint => [-1.0, 0.0, 1.0][rng.random_range(0..3)],
            PriorSpec::PointMass(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let mut u = rng.random::<f64>() * total;
                for &(x, w) in atoms {
                    if u < w {
                        return x;
                    }
                    u -= w;
                }
                atoms[atoms.len() - 1].0
            }
            PriorSpec::BernoulliGaussian { sparsity, variance } => {
                if rng.random::<f64>() < *sparsity {
                    let z: f64 = StandardNormal.sample(rng);
                    variance.sqrt() * z
                } else {
                    0.0
                }
            }
            PriorSpec::Gaussian { variance } => {
                let z: f64 = StandardNormal.sample(rng);
                variance.sqrt() * z
            }
        }
    }

    /// Whether the prior places positive mass exactly at zero.
    pub fn has_zero_atom(&self) -> bool {
        match self {
            PriorSpec::ThreePoint => true,
            PriorSpec::PointMass(atoms) => atoms.iter().any(|a| a.0 == 0.0),
            PriorSpec::BernoulliGaussian { sparsity, .. } => *sparsity < 1.0,
            PriorSpec::Gaussian { .. } => false,
        }
    }
}

fn renormalize(atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.into_iter().map(|(x, w)| (x, w / total)).collect()
}

fn parse_f64(s: &str, whole: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| TapError::PriorDescriptor(whole.to_string()))
}

impl FromStr for PriorSpec {
    type Err = TapError;

    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || TapError::PriorDescriptor(text.to_string());
        let (head, args) = match t.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim().trim_start_matches('<').trim_end_matches('>'))),
            None => (t, None),
        };
        match (head, args) {
            ("three-point", None) => Ok(PriorSpec::ThreePoint),
            ("point-mass", Some(a)) => {
                let mut atoms = Vec::new();
                for pair in a.split(';').filter(|p| !p.trim().is_empty()) {
                    let (v, w) = pair.split_once(',').ok_or_else(bad)?;
                    atoms.push((parse_f64(v, text)?, parse_f64(w, text)?));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if atoms.iter().any(|a| a.1 <= 0.0) || (total - 1.0).abs() > 1e-6 {
                    return Err(TapError::InvalidPrior(format!(
                        "point-mass weights must be positive and sum to 1 (got {total})"
                    )));
                }
                Ok(PriorSpec::PointMass(renormalize(atoms)))
            }
            ("bernoulli-gaussian", Some(a)) => {
                let (s, v) = a.split_once(',').ok_or_else(bad)?;
                let sparsity = parse_f64(s, text)?;
                let variance = parse_f64(v, text)?;
                if !(sparsity > 0.0 && sparsity < 1.0) || variance <= 0.0 {
                    return Err(TapError::InvalidPrior(format!(
                        "bernoulli-gaussian needs sparsity in (0,1) and variance > 0, got ({sparsity}, {variance})"
                    )));
                }
                Ok(PriorSpec::BernoulliGaussian { sparsity, variance })
            }
            ("gaussian", Some(a)) => {
                let variance = parse_f64(a, text)?;
                if variance <= 0.0 {
                    return Err(TapError::InvalidPrior("gaussian variance must be positive".into()));
                }
                Ok(PriorSpec::Gaussian { variance })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::ThreePoint => write!(f, "three-point"),
            PriorSpec::PointMass(atoms) => {
                write!(f, "point-mass:")?;
                for (i, (v, w)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{v},{w}")?;
                }
                Ok(())
            }
            PriorSpec::BernoulliGaussian { sparsity, variance } => {
                write!(f, "bernoulli-gaussian:{sparsity},{variance}")
            }
            PriorSpec::Gaussian { variance } => write!(f, "gaussian:{variance}"),
        }
    }
}
