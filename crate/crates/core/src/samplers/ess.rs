//! Classic elliptical slice sampling with bracket shrinking.

use std::f64::consts::PI;

use rand::Rng;

use super::gass::ellipse_point;
use super::{LogLikelihood, MvnPrior};
use crate::error::{BtfError, Result};

/// One ESS transition targeting `exp(loglik(x)) MVN(x; μ, Σ)`.
///
/// A log-likelihood of `-inf` is allowed away from the current point, which is
/// how hard constraints are folded in for the rejection baseline.
pub fn ess_step<R, L>(x: &[f64], prior: &MvnPrior, loglik: &L, rng: &mut R) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    L: LogLikelihood + ?Sized,
{
    if x.len() != prior.dim() {
        return Err(BtfError::ShapeMismatch(format!(
            "point of length {} for prior of dimension {}",
            x.len(),
            prior.dim()
        )));
    }
    let current = loglik.log_lik(x);
    if !current.is_finite() {
        return Err(BtfError::InvalidArgument(format!(
            "log-likelihood {current} at the current point"
        )));
    }
    let threshold = current + rng.random::<f64>().ln();
    let v = prior.sample_centered(rng);
    let mu = prior.mean();
    let mut theta = rng.random_range(0.0..2.0 * PI);
    let (mut lo, mut hi) = (theta - 2.0 * PI, theta);
    loop {
        let cand = ellipse_point(x, &v, mu, theta);
        if loglik.log_lik(&cand) >= threshold {
            return Ok(cand);
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo < 1e-12 {
            return Ok(x.to_vec());
        }
        theta = rng.random_range(lo..hi);
    }
}
