//! Simulated drug screens scored against their known viability curves.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintKind;
use crate::dose::{
    estimate_pipetting_prior, normalize_plate, plates_to_tensor, posterior_predictive_intervals, simulate_screen,
    GammaMixtureLik, PipettingPriorConfig, PlateSimConfig,
};
use crate::error::{BtfError, Result};
use crate::gibbs::{FitConfig, Sampler};
use crate::likelihood::LikelihoodSpec;
use crate::rng::{stream_rng, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseSimConfig {
    pub plates: PlateSimConfig,
    pub prior: PipettingPriorConfig,
    pub d: usize,
    pub k: usize,
    pub rho2: f64,
    pub burn_in: usize,
    pub samples: usize,
    pub monotone: bool,
    /// Central predictive interval level.
    pub level: f64,
    pub seed: u64,
}

impl Default for DoseSimConfig {
    fn default() -> Self {
        Self {
            plates: PlateSimConfig::default(),
            prior: PipettingPriorConfig::default(),
            d: 3,
            k: 1,
            rho2: 0.01,
            burn_in: 500,
            samples: 500,
            monotone: true,
            level: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseSimTrial {
    /// RMSE of the posterior-mean curves to the true curves.
    pub rmse: f64,
    /// RMSE of per-cell replicate means to the true curves.
    pub baseline_rmse: f64,
    /// Future replicates inside their predictive interval, and the total.
    pub covered: usize,
    pub total: usize,
    /// Every posterior-mean curve lies in `[0, 1]`.
    pub in_unit_interval: bool,
    /// Every posterior-mean curve is nonincreasing (vacuous when not flagged).
    pub monotone: bool,
    pub mixture_sd: f64,
    pub degenerate_steps: u64,
}

impl DoseSimTrial {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.total as f64
    }
}

pub fn run_trial(cfg: &DoseSimConfig, trial: u64) -> Result<DoseSimTrial> {
    let pc = &cfg.plates;
    let screen = simulate_screen(pc, &mut stream_rng(cfg.seed, trial, Phase::Generate, 0))?;
    let prior = estimate_pipetting_prior(&screen.plates, &cfg.prior)?;
    let y = plates_to_tensor(&screen.plates)?;
    let lik = LikelihoodSpec::black_box(
        GammaMixtureLik::new(prior.mixture.clone())?,
        ConstraintKind::unit_interval(cfg.monotone),
    );
    let mut fc = FitConfig::new(cfg.d, lik);
    fc.k = cfg.k;
    fc.rho2 = cfg.rho2;
    fc.burn_in = cfg.burn_in;
    fc.sweeps = cfg.burn_in + cfg.samples;
    fc.seed = cfg.seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut sampler = Sampler::new(&y, fc)?;
    sampler.run()?;
    let samples = sampler.into_samples();
    let mean = samples.mean_theta()?;

    let (mut se, mut se_base, mut cells) = (0.0, 0.0, 0usize);
    let (mut in_unit, mut monotone) = (true, true);
    for p in &screen.plates {
        let norm = normalize_plate(p)?;
        for t in 0..pc.doses {
            let (fit, truth) = (mean[[p.row, p.col, t]], screen.theta[[p.row, p.col, t]]);
            se += (fit - truth).powi(2);
            se_base += (norm.row(t).mean().unwrap_or(0.0) - truth).powi(2);
            cells += 1;
            in_unit &= (-1e-9..=1.0 + 1e-9).contains(&fit);
            if cfg.monotone && t > 0 {
                monotone &= fit <= mean[[p.row, p.col, t - 1]] + 1e-9;
            }
        }
    }

    let intervals = posterior_predictive_intervals(
        &samples,
        &prior.mixture,
        cfg.level,
        &mut stream_rng(cfg.seed, trial, Phase::Predict, 0),
    )?;
    let future = screen.future_replicates(pc, &mut stream_rng(cfg.seed, trial, Phase::Generate, 1))?;
    let (mut covered, mut total) = (0, 0);
    for (p, f) in screen.plates.iter().zip(&future) {
        for ((t, _), &v) in f.indexed_iter() {
            total += 1;
            let idx = [p.row, p.col, t];
            if v >= intervals.lower[idx] && v <= intervals.upper[idx] {
                covered += 1;
            }
        }
    }
    Ok(DoseSimTrial {
        rmse: (se / cells as f64).sqrt(),
        baseline_rmse: (se_base / cells as f64).sqrt(),
        covered,
        total,
        in_unit_interval: in_unit,
        monotone,
        mixture_sd: prior.mixture.spread_sd(),
        degenerate_steps: samples.degenerate_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseSimReport {
    pub config: DoseSimConfig,
    pub trials: Vec<DoseSimTrial>,
}

impl DoseSimReport {
    /// Trials where the model beat the replicate-mean baseline.
    pub fn wins(&self) -> usize {
        self.trials.iter().filter(|t| t.rmse < t.baseline_rmse).count()
    }

    /// Coverage pooled over every future replicate of every trial.
    pub fn pooled_coverage(&self) -> f64 {
        let (c, n) = self.trials.iter().fold((0, 0), |(c, n), t| (c + t.covered, n + t.total));
        c as f64 / n as f64
    }
}

impl fmt::Display for DoseSimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "{} rows x {} cols x {} doses x {} replicates, D={} k={} rho2={}, {} + {} sweeps",
            c.plates.rows, c.plates.cols, c.plates.doses, c.plates.replicates, c.d, c.k, c.rho2, c.burn_in, c.samples
        )?;
        writeln!(f, "{:<7}{:>10}{:>12}{:>10}{:>10}{:>9}", "trial", "RMSE", "baseline", "coverage", "mix sd", "valid")?;
        for (i, t) in self.trials.iter().enumerate() {
            writeln!(
                f,
                "{:<7}{:>10.4}{:>12.4}{:>10.3}{:>10.4}{:>9}",
                i,
                t.rmse,
                t.baseline_rmse,
                t.coverage(),
                t.mixture_sd,
                t.in_unit_interval && t.monotone
            )?;
        }
        writeln!(
            f,
            "beat baseline on {}/{} trials, pooled {:.0}% interval coverage {:.3}",
            self.wins(),
            self.trials.len(),
            100.0 * c.level,
            self.pooled_coverage()
        )
    }
}

pub fn run_dose_sim(cfg: &DoseSimConfig, trials: usize) -> Result<DoseSimReport> {
    if trials == 0 {
        return Err(BtfError::InvalidArgument("trials must be at least 1".into()));
    }
    let trials = (0..trials as u64).map(|t| run_trial(cfg, t)).collect::<Result<_>>()?;
    Ok(DoseSimReport { config: *cfg, trials })
}
