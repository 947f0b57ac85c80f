//! Synthetic benchmarks and evaluation metrics.

pub mod dose_sim;
pub mod metrics;
pub mod table1;
pub mod table2;

use ndarray::{Array2, Array3, Array4};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, Poisson, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use metrics::{coverage, log_mean_exp, mae, metrics, mse, rmse, MetricReport};

use crate::constraints::ConstraintKind;
use crate::error::{BtfError, Result};
use crate::linalg::BandedSym;
use crate::samplers::MvnPrior;
use crate::tensor::{LongRecord, ObservationTensor};

/// Prior mean of the constrained-MVN benchmark curve.
pub const GASS_BENCH_MEAN: [f64; 9] = [0.95, 0.8, 0.75, 0.5, 0.29, 0.2, 0.17, 0.15, 0.15];

/// Hyperparameters of the constrained-MVN benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GassBenchParams {
    pub shape: f64,
    pub tau: f64,
    pub bandwidth: f64,
    pub replicates: usize,
}

impl Default for GassBenchParams {
    fn default() -> Self {
        Self {
            shape: 100.0,
            tau: 0.1,
            bandwidth: 3.0,
            replicates: 3,
        }
    }
}

impl GassBenchParams {
    /// Squared-exponential covariance `τ exp(−(i−j)²/(2b))`.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = GASS_BENCH_MEAN.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = i as f64 - j as f64;
                        self.tau * (-d * d / (2.0 * self.bandwidth)).exp()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn prior(&self) -> Result<MvnPrior> {
        MvnPrior::from_covariance(GASS_BENCH_MEAN.to_vec(), &BandedSym::from_dense(&self.covariance()))
    }

    /// `0.1 ≤ θ ≤ 1` and nonincreasing.
    pub fn constraints(&self) -> ConstraintKind {
        ConstraintKind::bounded(0.1, 1.0, true)
    }
}

/// One draw of the constrained curve and its gamma observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GassBenchmarkInstance {
    pub theta_true: Vec<f64>,
    /// `9 × R` replicates.
    pub y: Array2<f64>,
    pub params: GassBenchParams,
}

impl GassBenchmarkInstance {
    /// `Σ_{i,r} log Gamma(y_ir; shape a, scale θ_i)`; `−∞` for any `θ_i ≤ 0`.
    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let a = self.params.shape;
        let c = ln_gamma(a);
        let mut s = 0.0;
        for (i, &th) in theta.iter().enumerate() {
            if !(th > 0.0) {
                return f64::NEG_INFINITY;
            }
            let lt = th.ln();
            for &y in self.y.row(i) {
                s += (a - 1.0) * y.ln() - y / th - a * lt - c;
            }
        }
        s
    }
}

const MAX_PROPOSALS: usize = 1_000_000;

/// Draws `θ` by rejection from the unconstrained prior, then replicates
/// `y_ir ~ Gamma(shape a, scale θ_i)`.
pub fn gen_gass_benchmark<R: Rng + ?Sized>(params: &GassBenchParams, rng: &mut R) -> Result<GassBenchmarkInstance> {
    let prior = params.prior()?;
    let kind = params.constraints();
    let theta = (0..MAX_PROPOSALS)
        .map(|_| prior.sample(rng))
        .find(|x| kind.curve_feasible(x))
        .ok_or_else(|| BtfError::NoConvergence(format!("no feasible curve in {MAX_PROPOSALS} proposals")))?;
    let mut y = Array2::zeros((theta.len(), params.replicates));
    for (i, &th) in theta.iter().enumerate() {
        let g = Gamma::new(params.shape, th).map_err(|e| BtfError::InvalidArgument(e.to_string()))?;
        for r in 0..params.replicates {
            y[[i, r]] = g.sample(rng);
        }
    }
    Ok(GassBenchmarkInstance {
        theta_true: theta,
        y,
        params: *params,
    })
}

/// Count tensor with piecewise-constant nondecreasing rate curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonDynSysInstance {
    pub w: Array2<f64>,
    pub v: Array3<f64>,
    pub rate: Array3<f64>,
    pub y: Array3<f64>,
    /// True where the cell is held out from fitting.
    pub holdout: Array3<bool>,
}

impl PoissonDynSysInstance {
    /// The observed (non-held-out) counts with one replicate per cell.
    pub fn observed(&self) -> Result<ObservationTensor> {
        let records = self
            .y
            .indexed_iter()
            .filter(|(k, _)| !self.holdout[*k])
            .map(|((i, j, t), &value)| LongRecord {
                row: i,
                col: j,
                dose: t,
                replicate: 0,
                value,
            });
        let (n, m, t_len) = self.y.dim();
        let mut values = Array4::zeros((n, m, t_len, 1));
        let mut mask = Array4::from_elem((n, m, t_len, 1), false);
        for r in records {
            values[[r.row, r.col, r.dose, 0]] = r.value;
            mask[[r.row, r.col, r.dose, 0]] = true;
        }
        ObservationTensor::new(values, mask)
    }
}

/// Spike-and-slab increments: a jump at `(j, ℓ)` with probability 0.2 shared
/// across factor dimensions, `Gamma(1, 1)` sizes, cumulative sums over `t`,
/// `Gamma(1, 1)` rows and Poisson counts. The upper-left
/// `holdout.0 × holdout.1 × T` corner is held out.
pub fn gen_poisson_dynsys<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    t_len: usize,
    d: usize,
    holdout: (usize, usize),
    rng: &mut R,
) -> Result<PoissonDynSysInstance> {
    if n == 0 || m == 0 || t_len == 0 || d == 0 {
        return Err(BtfError::InvalidArgument("dimensions must be positive".into()));
    }
    let gate = Bernoulli::new(0.2).expect("valid probability");
    let slab = Gamma::new(1.0, 1.0).expect("valid gamma");
    let mut v = Array3::zeros((m, t_len, d));
    for j in 0..m {
        let mut acc = vec![0.0; d];
        for t in 0..t_len {
            if gate.sample(rng) {
                for a in acc.iter_mut() {
                    *a += slab.sample(rng);
                }
            }
            for k in 0..d {
                v[[j, t, k]] = acc[k];
            }
        }
    }
    let w = Array2::from_shape_fn((n, d), |_| slab.sample(rng));
    let mut rate = Array3::zeros((n, m, t_len));
    let mut y = Array3::zeros((n, m, t_len));
    for ((i, j, t), r) in rate.indexed_iter_mut() {
        *r = (0..d).map(|k| w[[i, k]] * v[[j, t, k]]).sum();
        y[[i, j, t]] = if *r > 0.0 {
            Poisson::new(*r).expect("positive rate").sample(rng)
        } else {
            0.0
        };
    }
    let holdout = Array3::from_shape_fn((n, m, t_len), |(i, j, _)| i < holdout.0 && j < holdout.1);
    Ok(PoissonDynSysInstance {
        w,
        v,
        rate,
        y,
        holdout,
    })
}

/// Gaussian tensor with smooth random curves plus occasional jumps.
#[derive(Debug, Clone)]
pub struct GaussianFunctionalInstance {
    pub tensor: ObservationTensor,
    pub theta: Array3<f64>,
    pub w: Array2<f64>,
    pub v: Array3<f64>,
    /// Largest absolute second difference allowed in a jump-free curve.
    pub smoothness_budget: f64,
}

/// Each `v_jd` is a sinusoid `A sin(2πωt/T + φ)` with `A ≤ 1.5` and `ω ≤ 1`;
/// with probability `jump_prob` per grid step a `N(0, 1)` level shift is added.
#[allow(clippy::too_many_arguments)]
pub fn gen_gaussian_functional_matrix<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    t_len: usize,
    d: usize,
    replicates: usize,
    jump_prob: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<GaussianFunctionalInstance> {
    if n == 0 || m == 0 || t_len == 0 || d == 0 || replicates == 0 {
        return Err(BtfError::InvalidArgument("dimensions must be positive".into()));
    }
    if !(noise_sd >= 0.0) || !(0.0..=1.0).contains(&jump_prob) {
        return Err(BtfError::InvalidArgument(format!(
            "noise_sd = {noise_sd} and jump_prob = {jump_prob} out of range"
        )));
    }
    let step = 2.0 * std::f64::consts::PI / t_len as f64;
    let smoothness_budget = 1.5 * step * step;
    let gate = Bernoulli::new(jump_prob).expect("checked probability");
    let amp = Uniform::new(0.5, 1.5).expect("valid range");
    let freq = Uniform::new(0.25, 1.0).expect("valid range");
    let phase = Uniform::new(0.0, 2.0 * std::f64::consts::PI).expect("valid range");
    let mut v = Array3::zeros((m, t_len, d));
    for j in 0..m {
        for k in 0..d {
            let (a, om, ph) = (amp.sample(rng), freq.sample(rng), phase.sample(rng));
            let mut level = 0.0;
            for t in 0..t_len {
                if t > 0 && gate.sample(rng) {
                    level += rng.sample::<f64, _>(StandardNormal);
                }
                v[[j, t, k]] = a * (step * om * t as f64 + ph).sin() + level;
            }
        }
    }
    let w = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let mut theta = Array3::zeros((n, m, t_len));
    for ((i, j, t), x) in theta.indexed_iter_mut() {
        *x = (0..d).map(|k| w[[i, k]] * v[[j, t, k]]).sum();
    }
    let mut values = Array4::zeros((n, m, t_len, replicates));
    for ((i, j, t, _), x) in values.indexed_iter_mut() {
        let e = if noise_sd > 0.0 {
            Normal::new(0.0, noise_sd).expect("positive sd").sample(rng)
        } else {
            0.0
        };
        *x = theta[[i, j, t]] + e;
    }
    Ok(GaussianFunctionalInstance {
        tensor: ObservationTensor::dense(values)?,
        theta,
        w,
        v,
        smoothness_budget,
    })
}
