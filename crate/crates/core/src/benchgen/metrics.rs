//! Point-error, interval-coverage and predictive scores.

use serde::{Deserialize, Serialize};

use crate::error::{BtfError, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(BtfError::ShapeMismatch(format!("{a} predictions for {b} targets")));
    }
    if a == 0 {
        return Err(BtfError::InsufficientData("no points to score".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    mse(pred, truth).map(f64::sqrt)
}

/// Fraction of `truth` inside the closed intervals `[lower, upper]`.
pub fn coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(lower.len(), truth.len())?;
    check_len(upper.len(), truth.len())?;
    let hits = truth
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `log(mean(exp(xs)))`, stable for large magnitudes.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    crate::stats::log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Scores for one prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    /// Negative log posterior-predictive density summed over held-out points.
    pub nll: Option<f64>,
}

/// All scores at once. `point_logliks[p][s]` is the log-likelihood of held-out
/// point `p` under retained sample `s`.
pub fn metrics(
    pred: &[f64],
    truth: &[f64],
    intervals: Option<(&[f64], &[f64])>,
    point_logliks: Option<&[Vec<f64>]>,
) -> Result<MetricReport> {
    let coverage = intervals.map(|(lo, hi)| coverage(lo, hi, truth)).transpose()?;
    let nll = point_logliks.map(|pts| -pts.iter().map(|s| log_mean_exp(s)).sum::<f64>());
    Ok(MetricReport {
        mse: mse(pred, truth)?,
        mae: mae(pred, truth)?,
        rmse: rmse(pred, truth)?,
        coverage,
        nll,
    })
}
