//! Gamma-mixture observation model for normalized viability measurements.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{BtfError, Result};
use crate::likelihood::CellLikelihood;
use crate::tensor::{ObservationTensor, ObservedCell};

/// Components `(m̂_k, â_k, b̂_k)`: weight, shape and scale base.
///
/// Given effect `θ`, component `k` draws `Gamma(shape â_k, scale b̂_k θ)`, so
/// its mean is `μ_k θ` with `μ_k = â_k b̂_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMixture {
    pub weights: Vec<f64>,
    pub shapes: Vec<f64>,
    pub scale_bases: Vec<f64>,
}

impl GammaMixture {
    pub fn new(weights: Vec<f64>, shapes: Vec<f64>, scale_bases: Vec<f64>) -> Result<Self> {
        let mix = Self {
            weights,
            shapes,
            scale_bases,
        };
        mix.validate()?;
        Ok(mix)
    }

    /// One component with mean `mean` and standard deviation `sd` at `θ = 1`.
    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        let var = sd * sd;
        Self::new(vec![1.0], vec![mean * mean / var], vec![var / mean])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.shapes.len() != k || self.scale_bases.len() != k {
            return Err(BtfError::ShapeMismatch(format!(
                "mixture with {} weights, {} shapes, {} scale bases",
                k,
                self.shapes.len(),
                self.scale_bases.len()
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BtfError::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !self.weights.iter().all(|w| *w >= 0.0) || !positive(&self.shapes) || !positive(&self.scale_bases) {
            return Err(BtfError::InvalidArgument(
                "mixture weights must be non-negative and shapes and scales positive".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Component means `μ_k` at full viability.
    pub fn means(&self) -> Vec<f64> {
        self.shapes.iter().zip(&self.scale_bases).map(|(a, b)| a * b).collect()
    }

    /// Standard deviation of the component means around their weighted mean.
    pub fn spread_sd(&self) -> f64 {
        let mu = self.means();
        let m: f64 = self.weights.iter().zip(&mu).map(|(w, x)| w * x).sum();
        self.weights
            .iter()
            .zip(&mu)
            .map(|(w, x)| w * (x - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `log Σ_k m̂_k Ga(y; â_k, b̂_k θ)` for one replicate.
    pub fn log_density(&self, y: f64, theta: f64) -> f64 {
        if !(theta > 0.0 && theta <= 1.0) || !(y > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (ly, lt) = (y.ln(), theta.ln());
        let term = |k: usize| {
            let (a, b) = (self.shapes[k], self.scale_bases[k]);
            self.weights[k].ln() - ln_gamma(a) - a * b.ln() + (a - 1.0) * ly - a * lt - y / (b * theta)
        };
        let mut top = f64::NEG_INFINITY;
        for k in 0..self.len() {
            top = top.max(term(k));
        }
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + (0..self.len()).map(|k| (term(k) - top).exp()).sum::<f64>().ln()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| BtfError::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mix: Self = serde_json::from_str(s).map_err(|e| BtfError::Parse(e.to_string()))?;
        mix.validate()?;
        Ok(mix)
    }
}

/// Sum of [`GammaMixture::log_density`] over replicates.
pub fn gamma_mixture_loglik(y: &[f64], theta: f64, mix: &GammaMixture) -> f64 {
    y.iter().map(|&v| mix.log_density(v, theta)).sum()
}

/// Cell likelihood for the engine's black-box path, with per-component
/// constants cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMixtureLik {
    mixture: GammaMixture,
    /// `ln m̂_k − ln Γ(â_k) − â_k ln b̂_k`
    log_norm: Vec<f64>,
}

impl GammaMixtureLik {
    pub fn new(mixture: GammaMixture) -> Result<Self> {
        mixture.validate()?;
        let log_norm = (0..mixture.len())
            .map(|k| {
                let (a, b) = (mixture.shapes[k], mixture.scale_bases[k]);
                mixture.weights[k].ln() - ln_gamma(a) - a * b.ln()
            })
            .collect();
        Ok(Self { mixture, log_norm })
    }

    pub fn mixture(&self) -> &GammaMixture {
        &self.mixture
    }
}

impl CellLikelihood for GammaMixtureLik {
    fn log_lik(&self, cell: &ObservedCell, theta: f64) -> f64 {
        if !(theta > 0.0 && theta <= 1.0) {
            return f64::NEG_INFINITY;
        }
        let lt = theta.ln();
        let mix = &self.mixture;
        let mut total = 0.0;
        for &y in &cell.values {
            if !(y > 0.0) {
                return f64::NEG_INFINITY;
            }
            let ly = y.ln();
            let term = |k: usize| {
                let a = mix.shapes[k];
                self.log_norm[k] + (a - 1.0) * ly - a * lt - y / (mix.scale_bases[k] * theta)
            };
            let mut top = f64::NEG_INFINITY;
            for k in 0..mix.len() {
                top = top.max(term(k));
            }
            if top == f64::NEG_INFINITY {
                return top;
            }
            total += top + (0..mix.len()).map(|k| (term(k) - top).exp()).sum::<f64>().ln();
        }
        total
    }

    fn name(&self) -> &str {
        "gamma-mixture"
    }

    fn validate(&self, y: &ObservationTensor) -> Result<()> {
        for r in y.to_long() {
            if !(r.value > 0.0) {
                return Err(BtfError::InvalidArgument(format!(
                    "viability {} at ({}, {}, {}, {}) must be positive",
                    r.value, r.row, r.col, r.dose, r.replicate
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, Gamma};

    #[test]
    fn single_component_matches_gamma_density() {
        let mix = GammaMixture::new(vec![1.0], vec![100.0], vec![0.01]).unwrap();
        let direct = Gamma::new(100.0, 1.0 / 0.01).unwrap().ln_pdf(1.0);
        assert!((gamma_mixture_loglik(&[1.0], 1.0, &mix) - direct).abs() < 1e-10);
    }

    #[test]
    fn replicates_add() {
        let mix = GammaMixture::new(vec![0.3, 0.7], vec![50.0, 80.0], vec![0.02, 0.0125]).unwrap();
        let a = gamma_mixture_loglik(&[0.8], 0.7, &mix);
        let b = gamma_mixture_loglik(&[1.1], 0.7, &mix);
        assert_eq!(gamma_mixture_loglik(&[0.8, 1.1], 0.7, &mix), a + b);
    }

    #[test]
    fn outside_unit_interval_is_impossible() {
        let mix = GammaMixture::single(1.0, 0.1).unwrap();
        assert_eq!(gamma_mixture_loglik(&[1.0], 0.0, &mix), f64::NEG_INFINITY);
        assert_eq!(gamma_mixture_loglik(&[1.0], 1.01, &mix), f64::NEG_INFINITY);
    }

    #[test]
    fn cached_likelihood_matches_direct() {
        let mix = GammaMixture::new(vec![0.2, 0.5, 0.3], vec![80.0, 100.0, 120.0], vec![0.011, 0.01, 0.009]).unwrap();
        let lik = GammaMixtureLik::new(mix.clone()).unwrap();
        let cell = ObservedCell {
            row: 0,
            col: 0,
            dose: 0,
            values: vec![0.61, 0.7, 0.55],
        };
        for theta in [0.3, 0.65, 1.0] {
            let a = lik.log_lik(&cell, theta);
            let b = gamma_mixture_loglik(&cell.values, theta, &mix);
            assert!((a - b).abs() < 1e-10 * b.abs());
        }
    }

    #[test]
    fn json_round_trip() {
        let mix = GammaMixture::new(vec![0.25, 0.75], vec![9.0, 16.0], vec![0.1, 0.0625]).unwrap();
        assert_eq!(GammaMixture::from_json(&mix.to_json().unwrap()).unwrap(), mix);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(GammaMixture::new(vec![0.5, 0.4], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }
}
