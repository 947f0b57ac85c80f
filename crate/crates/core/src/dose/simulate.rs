//! Forward simulation of plate screens with column-correlated pipetting error.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::PlateExperiment;
use crate::error::{BtfError, Result};

/// Screen dimensions and noise levels.
///
/// `pipetting_sd` is the standard deviation of a treated column's seeded
/// population relative to its plate's control column; `within_cv` is the
/// coefficient of variation between wells of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateSimConfig {
    pub rows: usize,
    pub cols: usize,
    pub doses: usize,
    pub replicates: usize,
    pub factors: usize,
    pub pipetting_sd: f64,
    pub within_cv: f64,
    pub base_population: f64,
}

impl Default for PlateSimConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 6,
            doses: 9,
            replicates: 6,
            factors: 2,
            pipetting_sd: 0.1,
            within_cv: 0.05,
            base_population: 1000.0,
        }
    }
}

/// Simulated plates with their true viability curves.
#[derive(Debug, Clone)]
pub struct SimulatedScreen {
    pub plates: Vec<PlateExperiment>,
    pub theta: Array3<f64>,
    pub w: Array2<f64>,
    pub v: Array3<f64>,
}

impl SimulatedScreen {
    /// Fresh treated replicates for every plate at the true curves, normalized
    /// by each plate's existing control mean.
    pub fn future_replicates<R: Rng + ?Sized>(&self, cfg: &PlateSimConfig, rng: &mut R) -> Result<Vec<Array2<f64>>> {
        self.plates
            .iter()
            .map(|p| {
                let curve: Vec<f64> = (0..cfg.doses).map(|t| self.theta[[p.row, p.col, t]]).collect();
                let fresh = treated_block(&curve, cfg, rng)?;
                Ok(fresh / p.control_mean())
            })
            .collect()
    }
}

fn well<R: Rng + ?Sized>(mean: f64, cv: f64, rng: &mut R) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let shape = 1.0 / (cv * cv);
    Ok(Gamma::new(shape, mean / shape)
        .map_err(|e| BtfError::InvalidArgument(e.to_string()))?
        .sample(rng))
}

fn pipetting_ratio<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    let n = Normal::new(1.0, sd).expect("finite sd");
    loop {
        let r: f64 = n.sample(rng);
        if r > 0.05 {
            return r;
        }
    }
}

fn treated_block<R: Rng + ?Sized>(curve: &[f64], cfg: &PlateSimConfig, rng: &mut R) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((curve.len(), cfg.replicates));
    for (t, &theta) in curve.iter().enumerate() {
        let column = cfg.base_population * pipetting_ratio(cfg.pipetting_sd, rng) * theta;
        for r in 0..cfg.replicates {
            out[[t, r]] = well(column, cfg.within_cv, rng)?;
        }
    }
    Ok(out)
}

/// Low-rank nonincreasing viability curves with `θ = 1` at the lowest dose,
/// and one plate per `(row, column)` pair.
pub fn simulate_screen<R: Rng + ?Sized>(cfg: &PlateSimConfig, rng: &mut R) -> Result<SimulatedScreen> {
    if cfg.rows == 0 || cfg.cols == 0 || cfg.doses < 2 || cfg.replicates < 2 || cfg.factors == 0 {
        return Err(BtfError::InvalidArgument(
            "screen needs at least one row and column, two doses, two replicates and one factor".into(),
        ));
    }
    if !(cfg.pipetting_sd > 0.0) || !(cfg.within_cv > 0.0) || !(cfg.base_population > 0.0) {
        return Err(BtfError::InvalidArgument("noise levels and population must be positive".into()));
    }
    let (n, m, t_len, d) = (cfg.rows, cfg.cols, cfg.doses, cfg.factors);
    let dirichlet = Gamma::new(1.0, 1.0).expect("valid");
    let mut w = Array2::zeros((n, d));
    for i in 0..n {
        let g: Vec<f64> = (0..d).map(|_| dirichlet.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        for k in 0..d {
            w[[i, k]] = g[k] / s;
        }
    }
    let center = Uniform::new(1.0, t_len as f64).expect("valid range");
    let floor = Beta::new(1.0, 3.0).expect("valid");
    let mut v = Array3::zeros((m, t_len, d));
    for j in 0..m {
        for k in 0..d {
            let c: f64 = center.sample(rng);
            let slope: f64 = rng.random_range(0.5..2.0);
            let bottom: f64 = floor.sample(rng);
            let logistic = |t: f64| 1.0 / (1.0 + (slope * (t - c)).exp());
            let top = logistic(0.0);
            for t in 0..t_len {
                v[[j, t, k]] = bottom + (1.0 - bottom) * logistic(t as f64) / top;
            }
        }
    }
    let mut theta = Array3::zeros((n, m, t_len));
    for ((i, j, t), x) in theta.indexed_iter_mut() {
        *x = (0..d).map(|k| w[[i, k]] * v[[j, t, k]]).sum::<f64>().min(1.0);
    }
    let mut plates = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let control = (0..cfg.replicates)
                .map(|_| well(cfg.base_population, cfg.within_cv, rng))
                .collect::<Result<Vec<_>>>()?;
            let curve: Vec<f64> = (0..t_len).map(|t| theta[[i, j, t]]).collect();
            plates.push(PlateExperiment {
                plate_id: format!("plate-{i}-{j}"),
                row: i,
                col: j,
                control_values: control,
                dose_values: treated_block(&curve, cfg, rng)?,
            });
        }
    }
    Ok(SimulatedScreen { plates, theta, w, v })
}
