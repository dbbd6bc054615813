use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TapError};

/// Linear model `y = Xβ + ε`, `ε ~ N(0, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: f64,
}

impl LinearModel {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma2: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(TapError::Shape(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(TapError::Shape("empty design".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(TapError::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { x, y, sigma2 })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Realized aspect ratio `n/p`.
    pub fn delta_hat(&self) -> f64 {
        self.n() as f64 / self.p() as f64
    }

    /// Same design and response with a different noise variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), sigma2)
    }

    /// `y − Xm`.
    pub fn residual(&self, m: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * m
    }
}
