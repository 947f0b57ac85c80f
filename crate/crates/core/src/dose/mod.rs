//! Dose-response layer: plate normalization, the empirical-Bayes pipetting
//! prior, and [0, 1]-bounded viability constraints.

pub mod mixture;
pub mod simulate;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

pub use mixture::{gamma_mixture_loglik, GammaMixture, GammaMixtureLik};
pub use simulate::{simulate_screen, PlateSimConfig, SimulatedScreen};

use crate::constraints::{ConstraintKind, ConstraintScope, ConstraintSet};
use crate::error::{BtfError, Result};
use crate::gibbs::blackbox::constrained_pairs;
use crate::linalg::BandedSym;
use crate::model::{FactorState, PosteriorSamples};
use crate::stats::{mean, quantile_sorted};
use crate::tensor::{CellIndex, LongRecord, ObservationTensor};

/// One microwell plate: a control column and a `T × R` block of treated wells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateExperiment {
    pub plate_id: String,
    pub row: usize,
    pub col: usize,
    pub control_values: Vec<f64>,
    pub dose_values: Array2<f64>,
}

impl PlateExperiment {
    pub fn control_mean(&self) -> f64 {
        mean(&self.control_values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_values.len() < 2 {
            return Err(BtfError::InsufficientData(format!(
                "plate {} has {} control replicates, need at least 2",
                self.plate_id,
                self.control_values.len()
            )));
        }
        let all = self.control_values.iter().chain(self.dose_values.iter());
        if let Some(v) = all.clone().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BtfError::InvalidArgument(format!(
                "plate {} has invalid measurement {v}",
                self.plate_id
            )));
        }
        Ok(())
    }
}

/// Divides every treated well by the plate's control mean.
pub fn normalize_plate(p: &PlateExperiment) -> Result<Array2<f64>> {
    p.validate()?;
    let c = p.control_mean();
    if !(c > 0.0) {
        return Err(BtfError::InvalidArgument(format!(
            "plate {} has control mean {c}",
            p.plate_id
        )));
    }
    Ok(p.dose_values.mapv(|v| v / c))
}

/// Normalized plates as an `N × M × T × R` tensor.
pub fn plates_to_tensor(plates: &[PlateExperiment]) -> Result<ObservationTensor> {
    let mut records = Vec::new();
    for p in plates {
        let norm = normalize_plate(p)?;
        for ((t, r), &value) in norm.indexed_iter() {
            records.push(LongRecord {
                row: p.row,
                col: p.col,
                dose: t,
                replicate: r,
                value,
            });
        }
    }
    ObservationTensor::from_long(records)
}

/// Settings for [`estimate_pipetting_prior`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipettingPriorConfig {
    pub bins: usize,
    pub components: usize,
    pub min_plates: usize,
}

impl Default for PipettingPriorConfig {
    fn default() -> Self {
        Self {
            bins: 20,
            components: 25,
            min_plates: 10,
        }
    }
}

/// Fitted cubic log-intensity over the histogram of lowest-dose ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipettingFit {
    pub mixture: GammaMixture,
    pub qualifying_plates: usize,
    pub counts: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub upper: f64,
    pub within_var: f64,
    pub iterations: usize,
}

const POLY_DEGREE: usize = 3;
const IRLS_MAX_ITERS: usize = 100;
/// Keeps the smallest component mean positive.
const MAX_HALF_WIDTH: f64 = 0.95;

fn poly_row(x: f64) -> [f64; POLY_DEGREE + 1] {
    [1.0, x, x * x, x * x * x]
}

/// Poisson regression of `counts` on a cubic in `xs` with log link.
pub fn poisson_glm_cubic(xs: &[f64], counts: &[f64]) -> Result<(Vec<f64>, usize)> {
    let p = POLY_DEGREE + 1;
    let total: f64 = counts.iter().sum();
    let mut beta = vec![0.0; p];
    beta[0] = (total / counts.len() as f64 + 0.5).ln();
    let deviance = |beta: &[f64]| -> f64 {
        xs.iter()
            .zip(counts)
            .map(|(&x, &y)| {
                let mu = crate::linalg::dot(&poly_row(x), beta).clamp(-30.0, 30.0).exp();
                let term = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (term - (y - mu))
            })
            .sum()
    };
    let mut dev = deviance(&beta);
    for iter in 1..=IRLS_MAX_ITERS {
        let mut xtwx = vec![vec![0.0; p]; p];
        let mut xtwz = vec![0.0; p];
        for (&x, &y) in xs.iter().zip(counts) {
            let row = poly_row(x);
            let eta = crate::linalg::dot(&row, &beta).clamp(-30.0, 30.0);
            let mu = eta.exp();
            let z = eta + (y - mu) / mu;
            for a in 0..p {
                xtwz[a] += mu * row[a] * z;
                for b in 0..p {
                    xtwx[a][b] += mu * row[a] * row[b];
                }
            }
        }
        for (a, row) in xtwx.iter_mut().enumerate() {
            row[a] += 1e-10;
        }
        beta = BandedSym::from_dense(&xtwx).cholesky("IRLS normal equations")?.solve(&xtwz);
        let next = deviance(&beta);
        if (next - dev).abs() < 1e-10 * (next.abs() + 0.1) {
            return Ok((beta, iter));
        }
        dev = next;
    }
    Err(BtfError::NoConvergence(format!(
        "Poisson GLM did not converge in {IRLS_MAX_ITERS} iterations"
    )))
}

/// Empirical-Bayes prior on column pipetting ratios.
///
/// Plates whose lowest-dose mean exceeds the control mean are treated as
/// having a second control column; a smoothed, symmetrized histogram of their
/// ratios sets the mixture weights, and pooled control replicates set the
/// within-column variance.
pub fn estimate_pipetting_prior(plates: &[PlateExperiment], cfg: &PipettingPriorConfig) -> Result<PipettingFit> {
    if cfg.bins < 5 {
        return Err(BtfError::InvalidArgument(format!("bins = {} must be at least 5", cfg.bins)));
    }
    if cfg.components.is_multiple_of(2) || cfg.components < 3 {
        return Err(BtfError::InvalidArgument(format!(
            "component count {} must be odd and at least 3",
            cfg.components
        )));
    }
    let mut ratios = Vec::new();
    let mut control_ss = Vec::with_capacity(plates.len());
    let mut control_df = 0usize;
    for p in plates {
        let norm = normalize_plate(p)?;
        if norm.nrows() == 0 || norm.ncols() == 0 {
            return Err(BtfError::InsufficientData(format!("plate {} has no treated wells", p.plate_id)));
        }
        let lowest = norm.row(0).mean().expect("non-empty row");
        if lowest > 1.0 {
            ratios.push(lowest);
        }
        let c = p.control_mean();
        let scaled: Vec<f64> = p.control_values.iter().map(|v| v / c).collect();
        let m = mean(&scaled);
        control_ss.push(scaled.iter().map(|v| (v - m).powi(2)).sum::<f64>());
        control_df += scaled.len() - 1;
    }
    if ratios.len() < cfg.min_plates {
        return Err(BtfError::InsufficientData(format!(
            "only {} plates have a lowest-dose mean above the control mean (need {}); \
             use a fixed-width prior such as GammaMixture::single instead",
            ratios.len(),
            cfg.min_plates
        )));
    }
    ratios.sort_by(f64::total_cmp);
    control_ss.sort_by(f64::total_cmp);
    let within_var = control_ss.iter().sum::<f64>() / control_df as f64;
    if !(within_var > 0.0) {
        return Err(BtfError::InvalidArgument("control replicates have zero variance".into()));
    }

    let upper = *ratios.last().expect("non-empty");
    let width = upper - 1.0;
    let mut counts = vec![0.0; cfg.bins];
    for &r in &ratios {
        let b = (((r - 1.0) / width) * cfg.bins as f64).ceil() as usize;
        counts[b.clamp(1, cfg.bins) - 1] += 1.0;
    }
    let centers: Vec<f64> = (0..cfg.bins).map(|b| (b as f64 + 0.5) / cfg.bins as f64).collect();
    let (coefficients, iterations) = poisson_glm_cubic(&centers, &counts)?;

    let half = (cfg.components - 1) / 2;
    let spread = width.min(MAX_HALF_WIDTH);
    let density = |x: f64| crate::linalg::dot(&poly_row(x), &coefficients).clamp(-30.0, 30.0).exp();
    let mut means = Vec::with_capacity(cfg.components);
    let mut weights = Vec::with_capacity(cfg.components);
    for k in 0..cfg.components {
        let offset = k as f64 - half as f64;
        let x = offset.abs() / half as f64;
        means.push(1.0 + spread * offset / half as f64);
        weights.push(density(x));
    }
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let shapes = means.iter().map(|m| m * m / within_var).collect();
    let scale_bases = means.iter().map(|m| within_var / m).collect();
    let mixture = GammaMixture {
        weights,
        shapes,
        scale_bases,
    };
    mixture.validate()?;
    Ok(PipettingFit {
        mixture,
        qualifying_plates: ratios.len(),
        counts,
        coefficients,
        upper,
        within_var,
        iterations,
    })
}

/// Which factor block a constraint set applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoseUpdate {
    Row(usize),
    Column(usize),
}

/// `0 ≤ ⟨w_i, v_jt⟩ ≤ 1` (and nonincreasing in `t` when `monotone`) as linear
/// rows over the block being updated. Column blocks are laid out dose-major.
pub fn build_dose_constraints(
    context: DoseUpdate,
    state: &FactorState,
    index: &CellIndex,
    monotone: bool,
    scope: ConstraintScope,
) -> Result<ConstraintSet> {
    let kind = ConstraintKind::unit_interval(monotone);
    let pairs = constrained_pairs(index, &kind, scope);
    let (n, m, t_len, d) = state.dims();
    let curve_rows = kind.curve_rows(t_len);
    let mut rows = Vec::new();
    let mut gamma = Vec::new();
    let x = match context {
        DoseUpdate::Row(i) => {
            if i >= n {
                return Err(BtfError::IndexOutOfRange(format!("row {i} of {n}")));
            }
            for j in (0..m).filter(|&j| pairs[i][j]) {
                for r in &curve_rows {
                    let mut row = vec![0.0; d];
                    for &(t, c) in &r.coefs {
                        for (a, v) in row.iter_mut().zip(state.v_point(j, t)) {
                            *a += c * v;
                        }
                    }
                    rows.push(row);
                    gamma.push(r.gamma);
                }
            }
            state.w_row(i).to_vec()
        }
        DoseUpdate::Column(j) => {
            if j >= m {
                return Err(BtfError::IndexOutOfRange(format!("column {j} of {m}")));
            }
            for i in (0..n).filter(|&i| pairs[i][j]) {
                for r in &curve_rows {
                    let mut row = vec![0.0; t_len * d];
                    for &(t, c) in &r.coefs {
                        for (a, w) in row[t * d..(t + 1) * d].iter_mut().zip(state.w_row(i)) {
                            *a += c * w;
                        }
                    }
                    rows.push(row);
                    gamma.push(r.gamma);
                }
            }
            state.v_curve(j).to_vec()
        }
    };
    ConstraintSet::for_point(rows, gamma, &x)
}

/// Per-cell predictive interval bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveIntervals {
    pub lower: Array3<f64>,
    pub upper: Array3<f64>,
    pub level: f64,
}

/// Draws one replicate per retained sweep at every `(i, j, t)` and reports
/// the central `level` interval of those draws.
pub fn posterior_predictive_intervals<R: Rng + ?Sized>(
    samples: &PosteriorSamples,
    mix: &GammaMixture,
    level: f64,
    rng: &mut R,
) -> Result<PredictiveIntervals> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BtfError::InvalidArgument(format!("level {level} must be in (0, 1)")));
    }
    let first = samples
        .snapshots
        .first()
        .ok_or_else(|| BtfError::InsufficientData("no retained samples".into()))?;
    let (n, m, t_len, _) = first.factors.dims();
    let comps: Vec<Gamma<f64>> = (0..mix.len())
        .map(|k| Gamma::new(mix.shapes[k], mix.scale_bases[k]))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| BtfError::InvalidArgument(e.to_string()))?;
    let cdf: Vec<f64> = mix
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut draws = vec![Vec::with_capacity(samples.snapshots.len()); n * m * t_len];
    for s in &samples.snapshots {
        let theta = s.factors.theta_all();
        for (cell, &th) in draws.iter_mut().zip(theta.iter()) {
            let u: f64 = rng.random();
            let k = cdf.iter().position(|c| u < *c).unwrap_or(mix.len() - 1);
            let g: f64 = comps[k].sample(rng);
            cell.push(if th > 0.0 { g * th } else { 0.0 });
        }
    }
    let alpha = (1.0 - level) / 2.0;
    let mut lower = Array3::zeros((n, m, t_len));
    let mut upper = Array3::zeros((n, m, t_len));
    for ((lo, hi), mut cell) in lower.iter_mut().zip(upper.iter_mut()).zip(draws) {
        cell.sort_by(f64::total_cmp);
        *lo = quantile_sorted(&cell, alpha);
        *hi = quantile_sorted(&cell, 1.0 - alpha);
    }
    Ok(PredictiveIntervals { lower, upper, level })
}
