//! Variance and shrinkage hyperparameter updates.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SweepKey;
use crate::error::{BtfError, Result};
use crate::model::{FactorState, ShrinkageState};
use crate::rng::Phase;
use crate::samplers::{horseshoe_block_update, ShrinkageUpdate};
use crate::trend::CompositeDiffMatrix;

/// `Gamma(shape, rate)` prior on a precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 0.1,
            rate: 0.1,
        }
    }
}

impl GammaPrior {
    /// Draws a variance whose inverse follows `Gamma(shape + n/2, rate + ss/2)`.
    pub fn posterior_variance<R: Rng + ?Sized>(&self, n: f64, ss: f64, rng: &mut R) -> Result<f64> {
        if !ss.is_finite() {
            return Err(BtfError::NonFinite {
                value: ss,
                location: "sum of squares in variance update".into(),
            });
        }
        let shape = self.shape + n / 2.0;
        let rate = self.rate + ss / 2.0;
        let prec = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| BtfError::InvalidArgument(format!("gamma({shape}, {rate}): {e}")))?
            .sample(rng);
        Ok((1.0 / prec).clamp(1e-300, 1e300))
    }
}

/// `σ²` given the row factors: `σ⁻² ~ Gamma(a + ND/2, b + ‖W‖²/2)`.
pub fn update_sigma2<R: Rng + ?Sized>(w: &ndarray::Array2<f64>, prior: &GammaPrior, rng: &mut R) -> Result<f64> {
    let ss: f64 = w.iter().map(|x| x * x).sum();
    prior.posterior_variance(w.len() as f64, ss, rng)
}

/// `ν²` given `count` residuals with sum of squares `ss`.
pub fn update_nu2<R: Rng + ?Sized>(ss: f64, count: usize, prior: &GammaPrior, rng: &mut R) -> Result<f64> {
    prior.posterior_variance(count as f64, ss, rng)
}

/// Horseshoe+ updates of every column's local scales.
pub fn update_shrinkage(
    factors: &FactorState,
    shrinkage: &mut ShrinkageState,
    delta: &CompositeDiffMatrix,
    variant: ShrinkageUpdate,
    key: SweepKey,
) -> Result<()> {
    let (_, _, _, d) = factors.dims();
    let rho2 = shrinkage.rho2;
    shrinkage
        .columns
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(j, scales)| {
            let norms = delta.row_norms_sq(factors.v_curve(j), d);
            let mut rng = key.rng(Phase::Shrinkage, j as u64);
            horseshoe_block_update(&norms, rho2, d, scales, variant, &mut rng)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;
    use ndarray::Array2;

    #[test]
    fn zero_rows_give_prior_shape() {
        let w = Array2::zeros((4, 3));
        let prior = GammaPrior::default();
        let mut rng = crate::rng::seeded(91);
        let n = 100_000;
        let precs: Vec<f64> = (0..n)
            .map(|_| 1.0 / update_sigma2(&w, &prior, &mut rng).unwrap())
            .collect();
        let (shape, rate) = (0.1 + 6.0, 0.1);
        let se = (shape / (rate * rate) / n as f64).sqrt();
        assert!((mean(&precs) - shape / rate).abs() < 3.0 * se);
    }

    #[test]
    fn unit_rows_concentrate() {
        let w = Array2::ones((500, 4));
        let mut rng = crate::rng::seeded(92);
        let prec = 1.0 / update_sigma2(&w, &GammaPrior::default(), &mut rng).unwrap();
        assert!((prec - 1.0).abs() < 0.15, "{prec}");
    }

    #[test]
    fn non_finite_rejected() {
        let mut rng = crate::rng::seeded(93);
        assert!(update_nu2(f64::NAN, 3, &GammaPrior::default(), &mut rng).is_err());
    }
}
