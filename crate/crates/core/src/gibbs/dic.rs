//! Deviance information criterion.

use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};
use crate::likelihood::LikelihoodSpec;
use crate::model::PosteriorSamples;
use crate::tensor::CellIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub p_d: f64,
}

fn deviance(index: &CellIndex, lik: &LikelihoodSpec, theta: &ndarray::Array3<f64>, nu2: Option<f64>) -> f64 {
    -2.0 * index
        .cells
        .iter()
        .map(|c| lik.cell_loglik(c, theta[[c.row, c.col, c.dose]], nu2))
        .sum::<f64>()
}

/// `DIC = D̄ + p_D` with `p_D = D̄ - D(θ̄)`, where `θ̄` is the posterior-mean curve.
pub fn compute_dic(samples: &PosteriorSamples, index: &CellIndex, lik: &LikelihoodSpec) -> Result<DicReport> {
    if samples.snapshots.len() < 10 {
        return Err(BtfError::InsufficientData(format!(
            "DIC needs at least 10 retained samples, got {}",
            samples.snapshots.len()
        )));
    }
    let k = samples.snapshots.len() as f64;
    let mean_deviance = samples
        .snapshots
        .iter()
        .map(|s| deviance(index, lik, &s.factors.theta_all(), s.nu2))
        .sum::<f64>()
        / k;
    let nu2_bar = {
        let v: Vec<f64> = samples.snapshots.iter().filter_map(|s| s.nu2).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let theta_bar = samples.mean_theta()?;
    let deviance_at_mean = deviance(index, lik, &theta_bar, nu2_bar);
    if !deviance_at_mean.is_finite() || !mean_deviance.is_finite() {
        return Err(BtfError::InvalidArgument(format!(
            "likelihood undefined at the posterior mean (deviance {deviance_at_mean}, mean deviance {mean_deviance})"
        )));
    }
    let p_d = mean_deviance - deviance_at_mean;
    Ok(DicReport {
        dic: mean_deviance + p_d,
        mean_deviance,
        deviance_at_mean,
        p_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorState, Snapshot};
    use crate::tensor::ObservationTensor;
    use ndarray::{Array2, Array3};

    #[test]
    fn identical_draws_have_zero_penalty() {
        let y = ObservationTensor::from_long(vec![(0, 0, 0, 0, 1.0), (0, 0, 1, 0, 2.0)]).unwrap();
        let index = y.cell_index();
        let f = FactorState::new(Array2::ones((1, 1)), Array3::from_elem((1, 2, 1), 1.5)).unwrap();
        let snap = Snapshot {
            sweep: 0,
            factors: f,
            sigma2: 1.0,
            nu2: Some(0.5),
            loglik: 0.0,
        };
        let samples = PosteriorSamples {
            snapshots: vec![snap; 12],
            trace: Vec::new(),
            sweeps: 12,
            burn_in: 0,
            thin: 1,
            degenerate_steps: 0,
        };
        let lik = LikelihoodSpec::Gaussian { nu2: 0.5 };
        let r = compute_dic(&samples, &index, &lik).unwrap();
        assert!(r.p_d.abs() < 1e-12);
        assert!((r.dic - r.deviance_at_mean).abs() < 1e-12);
    }
}
