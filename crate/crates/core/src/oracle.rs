//! Exact references: Gaussian-prior closed forms, brute-force enumeration
//! for tiny atomic instances, a Monte Carlo evidence estimate and a
//! finite-difference checker.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Result, TapError};
use crate::free_energy::LinearModel;
use crate::scalar_channel::{Prior, PriorKind};
use crate::util::{CompensatedSum, LogSumExp};

/// Largest number of configurations [`enumerate_posterior`] will visit.
pub const ENUMERATION_LIMIT: f64 = 1e8;

/// Posterior of `β ~ N(0, τ² I)` under the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub tau2: f64,
    /// `Σ = (I/τ² + XᵀX/σ²)⁻¹`
    pub sigma: DMatrix<f64>,
    pub post_mean: DVector<f64>,
    pub log_evidence: f64,
    /// Positive root of `1/v = 1/τ² + δ/(σ² + v)` at the realized `δ = n/p`.
    pub v_star: f64,
    /// `log det(τ² XXᵀ + σ² I)` from the `n × n` factorization.
    pub logdet_n: f64,
    /// The same quantity from the `p × p` form `n log σ² + log det(I + (τ²/σ²) XᵀX)`.
    pub logdet_p: f64,
}

impl GaussianOracle {
    /// `diag(Σ)`
    pub fn variances(&self) -> DVector<f64> {
        self.sigma.diagonal()
    }
}

fn cholesky_logdet(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn gaussian_posterior(model: &LinearModel, tau2: f64) -> Result<GaussianOracle> {
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(TapError::Domain(format!("tau2 must be positive, got {tau2}")));
    }
    let (n, p) = (model.n(), model.p());
    let sigma2 = model.sigma2();
    let x = model.x();
    let y = model.y();
    let gram = x.tr_mul(x);

    let precision = &gram / sigma2 + DMatrix::identity(p, p) / tau2;
    let chol_p = Cholesky::new(precision).ok_or_else(|| TapError::Numeric("posterior precision not SPD".into()))?;
    let sigma = chol_p.inverse();
    let post_mean = chol_p.solve(&(x.tr_mul(y) / sigma2));

    let kernel = x * x.transpose() * tau2 + DMatrix::identity(n, n) * sigma2;
    let chol_n = Cholesky::new(kernel).ok_or_else(|| TapError::Numeric("evidence kernel not SPD".into()))?;
    let logdet_n = cholesky_logdet(&chol_n);
    let quad = y.dot(&chol_n.solve(y));
    let log_evidence = -0.5 * (n as f64 * (2.0 * PI).ln() + logdet_n + quad);

    let scaled = gram * (tau2 / sigma2) + DMatrix::identity(p, p);
    let chol_s = Cholesky::new(scaled).ok_or_else(|| TapError::Numeric("I + XᵀX not SPD".into()))?;
    let logdet_p = n as f64 * sigma2.ln() + cholesky_logdet(&chol_s);

    Ok(GaussianOracle {
        tau2,
        sigma,
        post_mean,
        log_evidence,
        v_star: v_star(tau2, sigma2, model.delta_hat()),
        logdet_n,
        logdet_p,
    })
}

/// Positive root of `v²/τ² + v(σ²/τ² + δ − 1) − σ² = 0`.
pub fn v_star(tau2: f64, sigma2: f64, delta: f64) -> f64 {
    let a = 1.0 / tau2;
    let b = sigma2 / tau2 + delta - 1.0;
    let disc = (b * b + 4.0 * a * sigma2).sqrt();
    if b >= 0.0 {
        2.0 * sigma2 / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// Variance of the mean-field fixed point, `(1/τ² + δ/σ²)⁻¹`.
pub fn v_mean_field(tau2: f64, sigma2: f64, delta: f64) -> f64 {
    1.0 / (1.0 / tau2 + delta / sigma2)
}

/// Stationary point of the TAP energy under the Gaussian prior:
/// `m = posterior mean`, `s = m² + v*`.
pub fn gaussian_tap_minimizer(oracle: &GaussianOracle) -> (DVector<f64>, DVector<f64>) {
    let m = oracle.post_mean.clone();
    let s = m.map(|v| v * v + oracle.v_star);
    (m, s)
}

/// Exact evidence and posterior marginal moments of an atomic prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub log_evidence: f64,
    /// `⟨β_j⟩`
    pub marginal_m: DVector<f64>,
    /// `⟨β_j²⟩`
    pub marginal_s: DVector<f64>,
    pub configurations: u64,
}

/// Weighted partial sums of one block, relative to `shift`.
struct Block {
    shift: f64,
    z: CompensatedSum,
    m: Vec<CompensatedSum>,
    s: Vec<CompensatedSum>,
}

impl Block {
    fn new(p: usize) -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            z: CompensatedSum::default(),
            m: vec![CompensatedSum::default(); p],
            s: vec![CompensatedSum::default(); p],
        }
    }

    fn rescale(&mut self, new_shift: f64) {
        if new_shift <= self.shift {
            return;
        }
        let f = (self.shift - new_shift).exp();
        let scale = |c: &CompensatedSum| {
            let mut out = CompensatedSum::default();
            out.add(c.value() * f);
            out
        };
        self.z = scale(&self.z);
        self.m.iter_mut().for_each(|c| *c = scale(c));
        self.s.iter_mut().for_each(|c| *c = scale(c));
        self.shift = new_shift;
    }

    fn add(&mut self, logw: f64, beta: &[f64]) {
        self.rescale(logw);
        let w = (logw - self.shift).exp();
        self.z.add(w);
        for (j, &b) in beta.iter().enumerate() {
            self.m[j].add(w * b);
            self.s[j].add(w * b * b);
        }
    }

    fn merge(&mut self, other: Block) {
        self.rescale(other.shift);
        let f = (other.shift - self.shift).exp();
        self.z.add(other.z.value() * f);
        for j in 0..self.m.len() {
            self.m[j].add(other.m[j].value() * f);
            self.s[j].add(other.s[j].value() * f);
        }
    }
}

/// Sums over every configuration in `supportᵖ`, in odometer order with the
/// residual `y − Xβ` updated one coordinate at a time. Blocks indexed by the
/// first coordinate run in parallel and are merged in index order.
pub fn enumerate_posterior(model: &LinearModel, prior: &Prior, p_max_guard: usize) -> Result<Enumeration> {
    if prior.kind() != PriorKind::ExplicitDiscrete {
        return Err(TapError::InvalidPrior("enumeration needs an explicitly discrete prior".into()));
    }
    let p = model.p();
    let k = prior.len();
    let configurations = (k as f64).powi(p as i32);
    if p > p_max_guard || configurations > ENUMERATION_LIMIT {
        return Err(TapError::GuardExceeded {
            configurations,
            limit: ENUMERATION_LIMIT.min((k as f64).powi(p_max_guard as i32)),
        });
    }
    let n = model.n();
    let sigma2 = model.sigma2();
    let locs = prior.locations();
    let logw = prior.log_weights();
    let x = model.x();
    let base = -0.5 * n as f64 * (2.0 * PI * sigma2).ln();

    let block = |first: usize| -> Block {
        let mut acc = Block::new(p);
        let mut idx = vec![0usize; p];
        idx[0] = first;
        let mut beta: Vec<f64> = idx.iter().map(|&i| locs[i]).collect();
        let mut r = model.y() - x * DVector::from_column_slice(&beta);
        let mut log_prior: f64 = idx.iter().map(|&i| logw[i]).sum();
        loop {
            let lw = base + log_prior - r.norm_squared() / (2.0 * sigma2);
            acc.add(lw, &beta);
            // advance the odometer over coordinates 1..p
            let mut j = 1;
            loop {
                if j >= p {
                    return acc;
                }
                let old = idx[j];
                let new = if old + 1 == k { 0 } else { old + 1 };
                idx[j] = new;
                r.axpy(beta[j] - locs[new], &x.column(j), 1.0);
                log_prior += logw[new] - logw[old];
                beta[j] = locs[new];
                if new != 0 {
                    break;
                }
                j += 1;
            }
        }
    };

    let blocks: Vec<Block> = (0..k).into_par_iter().map(block).collect();
    let mut total = Block::new(p);
    for b in blocks {
        total.merge(b);
    }
    let z = total.z.value();
    Ok(Enumeration {
        log_evidence: total.shift + z.ln(),
        marginal_m: DVector::from_iterator(p, total.m.iter().map(|c| c.value() / z)),
        marginal_s: DVector::from_iterator(p, total.s.iter().map(|c| c.value() / z)),
        configurations: configurations as u64,
    })
}

/// Plain Monte Carlo estimate of `E_{P₀}[N(y; Xβ, σ² I)]`. Values are stored
/// relative to `exp(log_shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEvidence {
    pub log_shift: f64,
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEvidence {
    pub fn log_evidence(&self) -> f64 {
        self.log_shift + self.mean.ln()
    }

    /// Standard errors separating `exp(log_evidence)` from the estimate.
    pub fn z_score(&self, log_evidence: f64) -> f64 {
        ((log_evidence - self.log_shift).exp() - self.mean) / self.std_error
    }
}

pub fn monte_carlo_evidence<R: Rng + ?Sized>(
    model: &LinearModel,
    prior: &Prior,
    samples: usize,
    rng: &mut R,
) -> Result<McEvidence> {
    if samples < 2 {
        return Err(TapError::Config("need at least two samples".into()));
    }
    let dist = WeightedIndex::new(prior.weights()).map_err(|e| TapError::InvalidPrior(e.to_string()))?;
    let (n, p) = (model.n(), model.p());
    let sigma2 = model.sigma2();
    let base = -0.5 * n as f64 * (2.0 * PI * sigma2).ln();
    let mut beta = DVector::zeros(p);
    let mut logs = Vec::with_capacity(samples);
    for _ in 0..samples {
        for j in 0..p {
            beta[j] = prior.locations()[dist.sample(rng)];
        }
        let r = model.y() - model.x() * &beta;
        logs.push(base - r.norm_squared() / (2.0 * sigma2));
    }
    let lse: LogSumExp = {
        let mut acc = LogSumExp::default();
        logs.iter().for_each(|&l| acc.add(l));
        acc
    };
    let log_shift = lse.value() - (samples as f64).ln();
    let vals: Vec<f64> = logs.iter().map(|l| (l - log_shift).exp()).collect();
    let mean: f64 = vals.iter().copied().collect::<CompensatedSum>().value() / samples as f64;
    let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value() / (samples - 1) as f64;
    Ok(McEvidence {
        log_shift,
        mean,
        std_error: (var / samples as f64).sqrt(),
        samples,
    })
}

/// Outcome of a central-difference gradient check. Errors are
/// `|fd − analytic| / (1 + |analytic|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub errors: Vec<f64>,
    pub passed: bool,
}

/// Compares `grad(point)` with central differences of `f`. Evaluation
/// failures at perturbed points propagate as errors.
pub fn fd_check<F, G>(f: F, grad: G, point: &[f64], step: f64, tol: f64) -> Result<FdReport>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(TapError::Config("finite-difference step must be positive".into()));
    }
    let analytic = grad(point)?;
    if analytic.len() != point.len() {
        return Err(TapError::Shape("gradient length differs from point".into()));
    }
    let mut x = point.to_vec();
    let mut errors = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let fp = f(&x)?;
        x[i] = point[i] - step;
        let fm = f(&x)?;
        x[i] = point[i];
        let fd = (fp - fm) / (2.0 * step);
        errors.push((fd - analytic[i]).abs() / (1.0 + analytic[i].abs()));
    }
    let (worst_index, max_rel_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(FdReport {
        max_rel_error,
        worst_index,
        passed: max_rel_error < tol,
        errors,
    })
}
