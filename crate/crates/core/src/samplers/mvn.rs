//! Multivariate normal draws from banded precision or covariance factors.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BtfError, Result};
use crate::linalg::{BandedCholesky, BandedSym};

#[derive(Debug, Clone)]
enum Factor {
    /// Cholesky factor of the covariance: `x = μ + L z`.
    Covariance(BandedCholesky),
    /// Cholesky factor of the precision: `x = μ + L⁻ᵀ z`.
    Precision(BandedCholesky),
}

/// A Gaussian `MVN(μ, Σ)` ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct MvnPrior {
    mean: Vec<f64>,
    factor: Factor,
}

impl MvnPrior {
    /// From mean and covariance.
    pub fn from_covariance(mean: Vec<f64>, cov: &BandedSym) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(BtfError::ShapeMismatch(format!(
                "mean of length {} for covariance of size {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(Self {
            mean,
            factor: Factor::Covariance(cov.cholesky("covariance")?),
        })
    }

    /// From canonical parameters: precision `Λ` and `h = Λ μ`.
    pub fn from_canonical(h: &[f64], precision: &BandedSym, name: &str) -> Result<Self> {
        if h.len() != precision.dim() {
            return Err(BtfError::ShapeMismatch(format!(
                "h of length {} for precision of size {}",
                h.len(),
                precision.dim()
            )));
        }
        let chol = precision.cholesky(name)?;
        let mean = chol.solve(h);
        Ok(Self {
            mean,
            factor: Factor::Precision(chol),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A draw from `MVN(0, Σ)`.
    pub fn sample_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        match &self.factor {
            Factor::Covariance(l) => l.mul_lower(&z),
            Factor::Precision(l) => {
                l.solve_upper(&mut z);
                z
            }
        }
    }

    /// A draw from `MVN(μ, Σ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = self.sample_centered(rng);
        for (xi, mi) in x.iter_mut().zip(&self.mean) {
            *xi += mi;
        }
        x
    }
}

/// Draws from `MVN(Λ⁻¹h, Λ⁻¹)` through a banded Cholesky factor of `Λ`.
pub fn mvn_sample_precision<R: Rng + ?Sized>(
    h: &[f64],
    lambda: &BandedSym,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(MvnPrior::from_canonical(h, lambda, "precision")?.sample(rng))
}
